"""Extremely randomized trees regressor.

Each node samples ``k_candidate_features`` distinct non-constant features,
draws one uniform threshold inside each feature's node range and keeps the
candidate with the largest variance reduction. Trees are seeded from
``(seed, tree_index)`` so adding trees never perturbs earlier ones and
parallel training is reproducible.
"""
from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from . import _accel
from .errors import ContractError, FormatError
from .features import FEATURE_NAMES, Dataset
from .kernels.trees import BEST, RANDOM, grow_numba, grow_numpy, predict_numba, predict_numpy
from .rng import bulk_uniform, stream_key


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 20
    k_candidate_features: int | None = None  # None: every feature
    min_samples_leaf: int = 5
    max_depth: int | None = None
    bootstrap: bool = False
    seed: int = 0
    splitter: str = "random"  # "random" (ERT) or "best" (CART / random forest)
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ContractError("n_trees must be >= 1")
        if self.k_candidate_features is not None and self.k_candidate_features < 1:
            raise ContractError("k_candidate_features must be >= 1")
        if self.min_samples_leaf < 1:
            raise ContractError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ContractError("max_depth must be >= 0")
        if self.splitter not in ("random", "best"):
            raise ContractError(f"unknown splitter {self.splitter!r}")

    def resolved_k(self, n_features: int) -> int:
        k = n_features if self.k_candidate_features is None else self.k_candidate_features
        if k > n_features:
            raise ContractError(f"k_candidate_features={k} exceeds feature count {n_features}")
        return k


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


@dataclass(frozen=True)
class Leaf:
    prediction: float
    n_samples: int


TreeNode = Union[Split, Leaf]


@dataclass(frozen=True, eq=False)
class Forest:
    """Trained ensemble stored as flat pre-order node arrays.

    Child indices are absolute positions in the concatenated arrays;
    ``feature == -1`` marks a leaf. ``roots[i]`` is the first node of tree i.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    roots: np.ndarray
    importances: np.ndarray
    config: TrainConfig
    feature_names: tuple[str, ...] = FEATURE_NAMES

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, X, use_numba=None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ContractError(f"expected (n, {self.n_features}) features, got {X.shape}")
        if use_numba is None:
            use_numba = _accel.USE_NUMBA
        kernel = predict_numba if use_numba else predict_numpy
        return kernel(X, self.feature, self.threshold, self.left, self.right, self.value, self.roots)

    def tree(self, i: int) -> TreeNode:
        def build(node):
            if self.feature[node] < 0:
                return Leaf(float(self.value[node]), int(self.n_samples[node]))
            return Split(int(self.feature[node]), float(self.threshold[node]),
                         build(self.left[node]), build(self.right[node]))
        return build(int(self.roots[i]))

    @property
    def trees(self) -> list[TreeNode]:
        return [self.tree(i) for i in range(self.n_trees)]

    def identical_to(self, other: "Forest") -> bool:
        names = ("feature", "threshold", "left", "right", "value", "n_samples", "roots", "importances")
        return self.config == other.config and all(
            np.array_equal(getattr(self, a), getattr(other, a)) for a in names
        )


def _tree_samples(n, config: TrainConfig, tree_index: int) -> np.ndarray:
    if not config.bootstrap:
        return np.arange(n, dtype=np.int64)
    u = bulk_uniform(stream_key(config.seed, "bootstrap", tree_index), 0, n)
    return np.sort((u * n).astype(np.int64))


def fit_arrays(X, y, config: TrainConfig, feature_names=None, use_numba=None) -> Forest:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ContractError("cannot fit on an empty dataset")
    if len(y) != len(X):
        raise ContractError(f"{len(X)} feature rows but {len(y)} targets")
    bad = np.flatnonzero(~np.isfinite(y))
    if len(bad):
        raise ContractError(f"non-finite target at row {bad[0]}: {y[bad[0]]}")
    names = tuple(feature_names) if feature_names is not None else (
        FEATURE_NAMES if X.shape[1] == len(FEATURE_NAMES) else tuple(f"f{i}" for i in range(X.shape[1])))
    k = config.resolved_k(X.shape[1])
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    grow = grow_numba if use_numba else grow_numpy
    mode = RANDOM if config.splitter == "random" else BEST
    max_depth = -1 if config.max_depth is None else config.max_depth

    def one(i):
        key = np.uint64(stream_key(config.seed, "tree", i))
        return grow(X, y, _tree_samples(len(y), config, i), mode, k, config.min_samples_leaf, max_depth, key)

    if config.n_jobs > 1 and config.n_trees > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            parts = list(pool.map(one, range(config.n_trees)))
    else:
        parts = [one(i) for i in range(config.n_trees)]
    return _assemble(parts, config, names, n_root=len(y))


def _assemble(parts, config, names, n_root):
    offsets = np.cumsum([0] + [len(p[0]) for p in parts])
    cat = [np.concatenate([p[j] for p in parts]) for j in range(6)]
    feature, threshold, left, right, value, nsamp = cat
    for j, off in enumerate(offsets[:-1]):
        lo, hi = off, offsets[j + 1]
        internal = feature[lo:hi] >= 0
        left[lo:hi][internal] += off
        right[lo:hi][internal] += off
    per_tree = np.array([p[6] for p in parts]) / n_root
    imp = per_tree.mean(axis=0)
    total = imp.sum()
    imp = imp / total if total > 0 else np.zeros_like(imp)
    return Forest(feature, threshold, left, right, value, nsamp, offsets[:-1].astype(np.int64),
                  imp, config, tuple(names))


def fit(dataset: Dataset, config: TrainConfig, use_numba=None) -> Forest:
    if len(dataset) == 0:
        raise ContractError("cannot fit on an empty dataset")
    return fit_arrays(dataset.X, dataset.y, config, dataset.feature_names, use_numba)


def predict(forest: Forest, features) -> float:
    """Prediction for a single feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != forest.n_features:
        raise ContractError(f"expected a {forest.n_features}-vector, got shape {x.shape}")
    return float(forest.predict(x[None, :])[0])


def feature_importances(forest: Forest) -> list[tuple[str, float]]:
    """(name, importance) pairs, descending; ties keep canonical feature order."""
    order = sorted(range(forest.n_features), key=lambda i: (-forest.importances[i], i))
    return [(forest.feature_names[i], float(forest.importances[i])) for i in order]


# --------------------------------------------------------------------------
# model file: magic, version, JSON header, little-endian arrays
# --------------------------------------------------------------------------

_MAGIC = b"VXFR"
_VERSION = 1
_ARRAYS = (
    ("roots", "<i8"), ("feature", "<i8"), ("threshold", "<f8"), ("left", "<i8"),
    ("right", "<i8"), ("value", "<f8"), ("n_samples", "<i8"), ("importances", "<f8"),
)


def save_forest(forest: Forest, path) -> None:
    header = json.dumps({
        "config": asdict(forest.config),
        "feature_names": list(forest.feature_names),
        "n_trees": forest.n_trees,
        "n_nodes": int(len(forest.feature)),
    }).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<HI", _VERSION, len(header)))
            fh.write(header)
            for name, dt in _ARRAYS:
                fh.write(np.ascontiguousarray(getattr(forest, name), dtype=dt).tobytes())
    except OSError as exc:
        raise FormatError(f"cannot write model {os.fspath(path)}: {exc}") from exc


def load_forest(path) -> Forest:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read model {os.fspath(path)}: {exc}") from exc
    if blob[:4] != _MAGIC:
        raise FormatError(f"{os.fspath(path)} is not a voxtherm model file")
    version, hlen = struct.unpack_from("<HI", blob, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported model version {version}")
    pos = 10
    header = json.loads(blob[pos:pos + hlen])
    pos += hlen
    sizes = {"roots": header["n_trees"], "importances": len(header["feature_names"])}
    arrays = {}
    for name, dt in _ARRAYS:
        count = sizes.get(name, header["n_nodes"])
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=pos)
        arrays[name] = arr.astype(dt[1:] if dt[1] == "f" else np.int64)
        pos += arr.nbytes
    if pos != len(blob):
        raise FormatError(f"{os.fspath(path)}: {len(blob) - pos} trailing bytes")
    return Forest(config=TrainConfig(**header["config"]), feature_names=tuple(header["feature_names"]), **arrays)
