"""Accuracy metrics and evaluation reports.

All metrics work in Kelvin. "%MAE" in reports is MAPE; ``nmae_percent``
(MAE over mean truth) is carried alongside it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .core import NEVER, ThermalHistory
from .errors import ContractError, FormatError
from .features import Dataset, VoxelCategory, pad_creation, step_categories


def _pair(truth, pred):
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.shape != pred.shape:
        raise ContractError(f"length mismatch: {len(truth)} truth vs {len(pred)} predictions")
    if len(truth) == 0:
        raise ContractError("no rows to score")
    return truth, pred


def r_squared(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    ss_tot = np.sum((truth - truth.mean()) ** 2)
    if ss_tot == 0.0:
        raise ContractError("R^2 undefined: truth is constant")
    return float(1.0 - np.sum((truth - pred) ** 2) / ss_tot)


def mape_percent(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    zero = np.flatnonzero(truth == 0.0)
    if len(zero):
        raise ContractError(f"MAPE undefined: zero truth at row {zero[0]}")
    return float(100.0 * np.mean(np.abs(truth - pred) / np.abs(truth)))


def nmae_percent(truth, pred) -> float:
    """Mean absolute error as a percentage of mean truth."""
    truth, pred = _pair(truth, pred)
    return float(100.0 * np.mean(np.abs(truth - pred)) / np.mean(np.abs(truth)))


def _r2_or_nan(truth, pred):
    try:
        return r_squared(truth, pred)
    except ContractError:
        return float("nan")


@dataclass(frozen=True)
class CategoryStats:
    share_percent: float
    r2: float
    mape_percent: float
    n_rows: int


@dataclass(frozen=True)
class EvalReport:
    r2: float
    mape_percent: float
    nmae_percent: float
    n_rows: int
    per_category: dict[VoxelCategory, CategoryStats] = field(default_factory=dict)
    runtime_seconds: float = 0.0

    def to_text(self) -> str:
        lines = [
            f"n_rows = {self.n_rows}",
            f"r2 = {self.r2:.6f}",
            f"mape_percent = {self.mape_percent:.6f}",
            f"nmae_percent = {self.nmae_percent:.6f}",
            f"runtime_seconds = {self.runtime_seconds:.3f}",
        ]
        for cat, st in self.per_category.items():
            key = cat.name.lower()
            lines += [
                f"{key}.share_percent = {st.share_percent:.4f}",
                f"{key}.r2 = {st.r2:.6f}",
                f"{key}.mape_percent = {st.mape_percent:.6f}",
                f"{key}.n_rows = {st.n_rows}",
            ]
        return "\n".join(lines) + "\n"

    def summary_table(self) -> str:
        """Tab-separated per-category rows followed by an ``overall`` row."""
        lines = ["category\tshare_percent\tr2\tmape_percent\tn_rows"]
        for cat, st in self.per_category.items():
            lines.append(f"{cat.label}\t{st.share_percent:.4f}\t{st.r2:.6f}\t{st.mape_percent:.6f}\t{st.n_rows}")
        lines.append(f"overall\t100.0000\t{self.r2:.6f}\t{self.mape_percent:.6f}\t{self.n_rows}")
        return "\n".join(lines) + "\n"


def truth_for(result, truth: ThermalHistory) -> np.ndarray:
    """Ground-truth temperature for every row of ``result``."""
    t = result.timestep
    v = result.voxel
    if len(t) == 0:
        return np.empty(0)
    late = np.flatnonzero(t > truth.final_step)
    if len(late):
        i = late[0]
        raise ContractError(f"truth ends at timestep {truth.final_step}; first gap at timestep {t[i]}, "
                            f"voxel {tuple(int(c) for c in v[i])}")
    values = truth.temperatures[t, v[:, 0], v[:, 1], v[:, 2]]
    gap = np.flatnonzero(np.isnan(values))
    if len(gap):
        i = gap[0]
        raise ContractError(f"no truth for voxel {tuple(int(c) for c in v[i])} at timestep {t[i]}")
    return values


def categories_for(result, creation_step=None, dataset: Dataset | None = None) -> np.ndarray:
    """Category label of each result row, from a dataset or recomputed from creation steps."""
    t = result.timestep
    v = result.voxel
    if dataset is not None:
        shape = np.maximum(dataset.voxel.max(axis=0), v.max(axis=0)) + 1 if len(v) else (1, 1, 1)
        def key(ts, vs):
            return ts * int(np.prod(shape)) + np.ravel_multi_index(vs.T, tuple(shape))
        dkey = key(dataset.timestep, dataset.voxel)
        order = np.argsort(dkey, kind="stable")
        rkey = key(t, v)
        pos = np.searchsorted(dkey, rkey, sorter=order)
        pos = np.minimum(pos, len(order) - 1)
        found = dkey[order[pos]] == rkey
        if not found.all():
            i = np.flatnonzero(~found)[0]
            raise ContractError(f"dataset has no row for voxel {tuple(int(c) for c in v[i])} at timestep {t[i]}")
        return dataset.category[order[pos]]
    if creation_step is None:
        raise ContractError("need creation steps or a dataset to label categories")
    cpad = pad_creation(np.asarray(creation_step))
    cat = np.empty(len(t), dtype=np.int8)
    for step in np.unique(t):
        rows = np.flatnonzero(t == step)
        cat[rows] = step_categories(cpad, int(step), v[rows])
    return cat


def evaluate(result, truth: ThermalHistory, dataset: Dataset | None = None,
             runtime_seconds: float | None = None) -> EvalReport:
    y = truth_for(result, truth)
    p = result.predicted
    if len(y) == 0:
        raise ContractError("forecast has no rows to evaluate")
    cat = categories_for(result, truth.creation_step, dataset)
    per = {}
    for c in VoxelCategory:
        sel = cat == c
        n = int(sel.sum())
        if n == 0:
            continue
        per[c] = CategoryStats(100.0 * n / len(y), _r2_or_nan(y[sel], p[sel]), mape_percent(y[sel], p[sel]), n)
    if runtime_seconds is None:
        runtime_seconds = sum(s.train_seconds + s.predict_seconds for s in result.stages)
    return EvalReport(_r2_or_nan(y, p), mape_percent(y, p), nmae_percent(y, p), len(y), per, runtime_seconds)


def export_scatter(result, truth, path) -> int:
    """Write ``truth_K,predicted_K`` pairs; ``truth`` is a history or an aligned array."""
    y = truth_for(result, truth) if isinstance(truth, ThermalHistory) else np.asarray(truth, dtype=np.float64)
    if len(y) != len(result.predicted):
        raise ContractError(f"{len(y)} truth values for {len(result.predicted)} predictions")
    try:
        with open(path, "w") as fh:
            fh.write("truth_K,predicted_K\n")
            for a, b in zip(y, result.predicted):
                fh.write(f"{a:.17g},{b:.17g}\n")
    except OSError as exc:
        raise FormatError(f"cannot write scatter export {os.fspath(path)}: {exc}") from exc
    return len(y)


def load_scatter(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise FormatError(f"cannot read scatter export {os.fspath(path)}: {exc}") from exc
    if table.size == 0:
        return np.empty(0), np.empty(0)
    return table[:, 0], table[:, 1]


__all__ = [
    "r_squared", "mape_percent", "nmae_percent", "CategoryStats", "EvalReport",
    "truth_for", "categories_for", "evaluate", "export_scatter", "load_scatter", "NEVER",
]
