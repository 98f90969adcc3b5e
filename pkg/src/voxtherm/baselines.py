"""Comparison learners: linear family, a single CART tree and a random forest.

The tree baselines reuse the forest builder with exhaustive midpoint splits.
Linear models see the -99 sentinels as ordinary numbers, exactly like the
tree learners do.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .ert import Forest, TrainConfig, fit_arrays
from .errors import ContractError, NumericalError
from .features import Dataset


class BaselineKind(str, Enum):
    OLS = "ols"
    RIDGE = "ridge"
    LASSO = "lasso"
    TREE = "decision_tree"
    RANDOM_FOREST = "random_forest"


@dataclass(frozen=True)
class BaselineModel:
    kind: BaselineKind
    lam: float = 1.0
    trees: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def ordinary_least_squares(cls):
        return cls(BaselineKind.OLS)

    @classmethod
    def ridge(cls, lam=1.0):
        return cls(BaselineKind.RIDGE, lam=lam)

    @classmethod
    def lasso(cls, lam=1.0):
        return cls(BaselineKind.LASSO, lam=lam)

    @classmethod
    def single_decision_tree(cls, min_samples_leaf=5, seed=0):
        return cls(BaselineKind.TREE, trees=TrainConfig(
            n_trees=1, splitter="best", bootstrap=False, min_samples_leaf=min_samples_leaf, seed=seed))

    @classmethod
    def random_forest(cls, n_trees=20, k_candidate_features=None, min_samples_leaf=5, seed=0):
        return cls(BaselineKind.RANDOM_FOREST, trees=TrainConfig(
            n_trees=n_trees, splitter="best", bootstrap=True, k_candidate_features=k_candidate_features,
            min_samples_leaf=min_samples_leaf, seed=seed))

    @property
    def name(self) -> str:
        if self.kind in (BaselineKind.RIDGE, BaselineKind.LASSO):
            return f"{self.kind.value}(lambda={self.lam:g})"
        if self.kind is BaselineKind.RANDOM_FOREST:
            return f"random_forest({self.trees.n_trees} trees)"
        return self.kind.value

    def with_seed(self, seed) -> "BaselineModel":
        return replace(self, trees=replace(self.trees, seed=seed))


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept


def _check(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ContractError("cannot fit on an empty dataset")
    bad = np.flatnonzero(~np.isfinite(y))
    if len(bad):
        raise ContractError(f"non-finite target at row {bad[0]}")
    return X, y


def fit_ols(X, y) -> LinearModel:
    """Least squares via the normal equations.

    Zero-variance columns are absorbed by the intercept and get coefficient 0.
    """
    X, y = _check(X, y)
    varying = X.max(axis=0) > X.min(axis=0)
    A = np.column_stack([X[:, varying], np.ones(len(X))])
    G = A.T @ A
    rank = np.linalg.matrix_rank(G)
    if rank < G.shape[0]:
        raise NumericalError(
            f"normal matrix is singular (rank {rank} < {G.shape[0]}); collinear features, "
            "use Ridge instead"
        )
    w = np.linalg.solve(G, A.T @ y)
    coef = np.zeros(X.shape[1])
    coef[varying] = w[:-1]
    return LinearModel(coef, float(w[-1]))


def fit_ridge(X, y, lam) -> LinearModel:
    """Closed-form ridge on centred data; the intercept is not penalised."""
    X, y = _check(X, y)
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    G = Xc.T @ Xc + lam * np.eye(X.shape[1])
    coef = np.linalg.solve(G, Xc.T @ (y - ym))
    return LinearModel(coef, float(ym - xm @ coef))


def fit_lasso(X, y, lam, max_iter=1000, tol=1e-8) -> LinearModel:
    """Cyclic coordinate descent on 1/(2n)||y - Xw - b||^2 + lam ||w||_1."""
    X, y = _check(X, y)
    n, p = X.shape
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    yc = y - ym
    norms = (Xc**2).sum(axis=0) / n
    w = np.zeros(p)
    resid = yc.copy()
    for _ in range(max_iter):
        w_max = 0.0
        d_max = 0.0
        for j in range(p):
            if norms[j] == 0.0:
                continue
            old = w[j]
            rho = Xc[:, j] @ resid / n + norms[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / norms[j]
            if new != old:
                resid -= Xc[:, j] * (new - old)
                w[j] = new
            d_max = max(d_max, abs(new - old))
            w_max = max(w_max, abs(new))
        if w_max == 0.0 or d_max / w_max < tol:
            break
    return LinearModel(w, float(ym - xm @ w))


def fit_model(learner, X, y, feature_names=None):
    """Fit either a forest config or a baseline spec; the result has ``predict(X)``."""
    if isinstance(learner, TrainConfig):
        return fit_arrays(X, y, learner, feature_names)
    kind = learner.kind
    if kind is BaselineKind.OLS:
        return fit_ols(X, y)
    if kind is BaselineKind.RIDGE:
        return fit_ridge(X, y, learner.lam)
    if kind is BaselineKind.LASSO:
        return fit_lasso(X, y, learner.lam)
    if kind in (BaselineKind.TREE, BaselineKind.RANDOM_FOREST):
        return fit_arrays(X, y, learner.trees, feature_names)
    raise ContractError(f"unknown baseline {kind!r}")


def fit_baseline(dataset: Dataset, model: BaselineModel) -> LinearModel | Forest:
    return fit_model(model, dataset.X, dataset.y, dataset.feature_names)
