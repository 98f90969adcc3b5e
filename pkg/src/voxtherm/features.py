"""Supervised rows from a temperature record.

One row per (voxel, timestep) with the voxel's own temperatures at t-1..t-5,
its 26 neighbours at t-1, its offset from the laser, creation and elapsed time
and the per-run laser labels. Any temperature that does not exist at its lookup
time is replaced by ``SENTINEL``.
"""
from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass
from enum import IntEnum
from itertools import product

import numpy as np

from .core import NEVER, DepositionSchedule, ThermalHistory, VoxelIndex
from .errors import ContractError, FormatError

SENTINEL = -99.0
N_HISTORY = 5


def neighbor_offsets() -> list[tuple[int, int, int]]:
    """The 26 neighbour offsets, lexicographic in (dx, dy, dz)."""
    return [o for o in product((-1, 0, 1), repeat=3) if o != (0, 0, 0)]


OFFSETS = np.array(neighbor_offsets(), dtype=np.int64)


def _neighbor_name(o):
    nonzero = [i for i, d in enumerate(o) if d]
    if len(nonzero) == 1:
        ax = nonzero[0]
        return f"T_immediate_({'xyz'[ax]}{'+' if o[ax] > 0 else '-'}1)"
    return "T_neighbor_(" + ",".join(f"{a}{d:+d}" for a, d in zip("xyz", o)) + ")"


FEATURE_NAMES: tuple[str, ...] = (
    tuple(f"T_self_(t-{k})" for k in range(1, N_HISTORY + 1))
    + tuple(_neighbor_name(o) for o in neighbor_offsets())
    + ("rel_x", "rel_y", "rel_z", "creation_time", "elapsed_time", "laser_power", "scan_speed")
)
N_FEATURES = len(FEATURE_NAMES)
N_TEMPERATURE_FEATURES = N_HISTORY + len(OFFSETS)
COL = {name: i for i, name in enumerate(FEATURE_NAMES)}


class VoxelCategory(IntEnum):
    INTERIOR = 0
    EDGE_LATERAL = 1
    EDGE_LONGITUDINAL = 2
    EDGE_VERTICAL = 3
    EDGE_DIAGONAL = 4

    @property
    def label(self) -> str:
        return _CATEGORY_LABELS[self]


_CATEGORY_LABELS = {
    VoxelCategory.INTERIOR: "Interior",
    VoxelCategory.EDGE_LATERAL: "Edge (Lateral)",
    VoxelCategory.EDGE_LONGITUDINAL: "Edge (Longitudinal)",
    VoxelCategory.EDGE_VERTICAL: "Edge (Vertical)",
    VoxelCategory.EDGE_DIAGONAL: "Edge (Diagonal)",
}

_AXIS_OFFSETS = {
    VoxelCategory.EDGE_LATERAL: [(-1, 0, 0), (1, 0, 0)],
    VoxelCategory.EDGE_LONGITUDINAL: [(0, -1, 0), (0, 1, 0)],
    VoxelCategory.EDGE_VERTICAL: [(0, 0, -1), (0, 0, 1)],
}


@dataclass(frozen=True)
class FeatureRow:
    voxel: VoxelIndex
    timestep: int
    history_temps: tuple[float, ...]
    neighbor_temps: tuple[float, ...]
    rel_x: float
    rel_y: float
    rel_z: float
    creation_time: float
    elapsed_time: float
    power_label: float
    scan_speed_label: float
    target: float
    category: VoxelCategory

    @property
    def vector(self) -> np.ndarray:
        return np.array(
            self.history_temps
            + self.neighbor_temps
            + (self.rel_x, self.rel_y, self.rel_z, self.creation_time,
               self.elapsed_time, self.power_label, self.scan_speed_label)
        )

    @classmethod
    def from_arrays(cls, x, target, category, voxel, t):
        x = [float(v) for v in x]
        return cls(
            VoxelIndex(*map(int, voxel)), int(t),
            tuple(x[:N_HISTORY]), tuple(x[N_HISTORY:N_TEMPERATURE_FEATURES]),
            *x[N_TEMPERATURE_FEATURES:], float(target), VoxelCategory(int(category)),
        )


# --------------------------------------------------------------------------
# vectorised builders
# --------------------------------------------------------------------------

def pad_record(temperatures: np.ndarray) -> np.ndarray:
    """Copy ``(T, nx, ny, nz)`` into a NaN-bordered ``(T, nx+2, ny+2, nz+2)`` array."""
    n_t, nx, ny, nz = temperatures.shape
    out = np.full((n_t, nx + 2, ny + 2, nz + 2), np.nan)
    out[:, 1:-1, 1:-1, 1:-1] = temperatures
    return out


@dataclass(frozen=True)
class RunLabels:
    """Per-run constants every row needs besides the temperatures."""

    dt: float
    edge_length: float
    power: float
    scan_speed: float

    @classmethod
    def of(cls, history: ThermalHistory) -> "RunLabels":
        laser = history.laser
        return cls(
            history.dt,
            history.grid.edge_length,
            laser.power_label if laser else 0.0,
            laser.scan_speed_label if laser else 0.0,
        )


def step_features(rec_pad, t, voxels, creation, laser_pos, labels: RunLabels) -> np.ndarray:
    """Feature matrix for ``voxels`` (n, 3) at timestep ``t``.

    Reads only ``rec_pad[t-5 .. t-1]``; ``creation`` holds each voxel's
    creation step and ``laser_pos`` the laser voxel at ``t``.
    """
    n = len(voxels)
    X = np.empty((n, N_FEATURES))
    shp = rec_pad.shape[1:]
    flat = np.ravel_multi_index((voxels + 1).T, shp) if n else np.empty(0, dtype=np.int64)
    for k in range(1, N_HISTORY + 1):
        if t - k >= 0:
            X[:, k - 1] = rec_pad[t - k].reshape(-1)[flat]
        else:
            X[:, k - 1] = np.nan
    if t >= 1:
        frame = rec_pad[t - 1].reshape(-1)
        strides = OFFSETS @ np.array([shp[1] * shp[2], shp[2], 1])
        X[:, N_HISTORY:N_TEMPERATURE_FEATURES] = frame[flat[:, None] + strides[None, :]]
    else:
        X[:, N_HISTORY:N_TEMPERATURE_FEATURES] = np.nan
    temps = X[:, :N_TEMPERATURE_FEATURES]
    temps[np.isnan(temps)] = SENTINEL
    c = N_TEMPERATURE_FEATURES
    X[:, c:c + 3] = (voxels - np.asarray(laser_pos)) * labels.edge_length
    X[:, c + 3] = creation * labels.dt
    X[:, c + 4] = (t - creation) * labels.dt
    X[:, c + 5] = labels.power
    X[:, c + 6] = labels.scan_speed
    return X


def pad_creation(creation: np.ndarray) -> np.ndarray:
    return np.pad(creation, 1, constant_values=NEVER)


def step_categories(creation_pad, t, voxels) -> np.ndarray:
    """Category of each voxel at ``t``, judged against the active set at ``t-1``."""
    n = len(voxels)
    shp = creation_pad.shape
    flat = np.ravel_multi_index((voxels + 1).T, shp) if n else np.empty(0, dtype=np.int64)
    strides = OFFSETS @ np.array([shp[1] * shp[2], shp[2], 1])
    missing = creation_pad.reshape(-1)[flat[:, None] + strides[None, :]] > t - 1
    cat = np.full(n, VoxelCategory.INTERIOR, dtype=np.int8)
    cat[missing.any(axis=1)] = VoxelCategory.EDGE_DIAGONAL
    index = {tuple(o): j for j, o in enumerate(neighbor_offsets())}
    # lowest precedence first so higher ones overwrite
    for category in (VoxelCategory.EDGE_VERTICAL, VoxelCategory.EDGE_LONGITUDINAL, VoxelCategory.EDGE_LATERAL):
        cols = [index[o] for o in _AXIS_OFFSETS[category]]
        cat[missing[:, cols].any(axis=1)] = category
    return cat


def classify_voxel(voxel, active_at_t_minus_1, grid) -> VoxelCategory:
    """Category of one voxel given the set (or boolean mask) of voxels active at t-1."""
    if isinstance(active_at_t_minus_1, np.ndarray):
        def present(v):
            return grid.contains(*v) and bool(active_at_t_minus_1[v])
    else:
        active = {tuple(v) for v in active_at_t_minus_1}

        def present(v):
            return grid.contains(*v) and v in active
    missing = {o for o in neighbor_offsets() if not present(tuple(a + b for a, b in zip(voxel, o)))}
    for category in (VoxelCategory.EDGE_LATERAL, VoxelCategory.EDGE_LONGITUDINAL, VoxelCategory.EDGE_VERTICAL):
        if missing.intersection(_AXIS_OFFSETS[category]):
            return category
    return VoxelCategory.EDGE_DIAGONAL if missing else VoxelCategory.INTERIOR


# --------------------------------------------------------------------------
# dataset
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Columnar rows, grouped by timestep ascending and C order within a step."""

    X: np.ndarray
    y: np.ndarray
    category: np.ndarray
    voxel: np.ndarray
    timestep: np.ndarray
    provenance: str = ""
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __len__(self):
        return len(self.y)

    def row(self, i) -> FeatureRow:
        return FeatureRow.from_arrays(self.X[i], self.y[i], self.category[i], self.voxel[i], self.timestep[i])

    @property
    def rows(self):
        return (self.row(i) for i in range(len(self)))

    def select(self, mask) -> "Dataset":
        return Dataset(self.X[mask], self.y[mask], self.category[mask], self.voxel[mask],
                       self.timestep[mask], self.provenance, self.feature_names)

    def until(self, t_max) -> "Dataset":
        """Rows with ``timestep <= t_max``."""
        return self.select(self.timestep <= t_max)


def _check_consistent(history: ThermalHistory, schedule: DepositionSchedule):
    if history.grid != schedule.grid:
        raise ContractError(f"grid mismatch: history {history.grid} vs schedule {schedule.grid}")
    if history.n_timesteps != schedule.n_timesteps:
        raise ContractError(
            f"history has {history.n_timesteps} timesteps, schedule {schedule.n_timesteps}"
        )
    bad = np.argwhere(history.creation_step != schedule.creation_step)
    if len(bad):
        v = tuple(int(c) for c in bad[0])
        raise ContractError(
            f"creation step mismatch at voxel {v}: history {history.creation_step[v]}, "
            f"schedule {schedule.creation_step[v]}"
        )
    t_idx = np.arange(history.n_timesteps)[:, None, None, None]
    expected = schedule.creation_step[None] <= t_idx
    bad = np.argwhere(~np.isnan(history.temperatures) != expected)
    if len(bad):
        t, *v = (int(c) for c in bad[0])
        state = "defined" if expected[t, v[0], v[1], v[2]] else "undefined"
        raise ContractError(f"temperature at timestep {t}, voxel {tuple(v)} should be {state}")


def extract_row(history: ThermalHistory, schedule: DepositionSchedule, voxel, t: int) -> FeatureRow:
    voxel = VoxelIndex(*map(int, voxel))
    if not schedule.grid.contains(*voxel) or schedule.creation_step[voxel] > t or t > history.final_step:
        raise ContractError(f"voxel {tuple(voxel)} is not active at timestep {t}")
    lo = max(t - N_HISTORY, 0)
    rec_pad = np.full((t + 1,) + tuple(s + 2 for s in history.grid.shape), np.nan)
    rec_pad[lo:t + 1, 1:-1, 1:-1, 1:-1] = history.temperatures[lo:t + 1]
    vox = np.array([voxel], dtype=np.int64)
    creation = schedule.creation_step[voxel]
    X = step_features(rec_pad, t, vox, np.array([creation]), schedule.laser_path[t], RunLabels.of(history))
    cat = step_categories(pad_creation(schedule.creation_step), t, vox)
    return FeatureRow.from_arrays(X[0], history.temperatures[t][voxel], cat[0], voxel, t)


def build_dataset(history: ThermalHistory, schedule: DepositionSchedule | None = None,
                  provenance: str = "") -> Dataset:
    """Every (voxel, t) with ``creation_step <= t <= final_step``."""
    if schedule is None:
        schedule = history.schedule()
    _check_consistent(history, schedule)
    rec_pad = pad_record(history.temperatures)
    cpad = pad_creation(schedule.creation_step)
    labels = RunLabels.of(history)
    Xs, ys, cats, voxs, ts = [], [], [], [], []
    for t in range(history.n_timesteps):
        vox = schedule.active_voxels(t)
        if not len(vox):
            continue
        creation = schedule.creation_step[tuple(vox.T)]
        Xs.append(step_features(rec_pad, t, vox, creation, schedule.laser_path[t], labels))
        ys.append(history.temperatures[t][tuple(vox.T)])
        cats.append(step_categories(cpad, t, vox))
        voxs.append(vox)
        ts.append(np.full(len(vox), t, dtype=np.int64))
    if not Xs:
        return Dataset(np.empty((0, N_FEATURES)), np.empty(0), np.empty(0, np.int8),
                       np.empty((0, 3), np.int64), np.empty(0, np.int64), provenance)
    return Dataset(np.vstack(Xs), np.concatenate(ys), np.concatenate(cats),
                   np.vstack(voxs), np.concatenate(ts), provenance)


# --------------------------------------------------------------------------
# dataset files
# --------------------------------------------------------------------------

EXTRA_COLUMNS = ("target_K", "category", "ix", "iy", "iz", "timestep")
DATASET_COLUMNS = FEATURE_NAMES + EXTRA_COLUMNS
_BIN_MAGIC = b"VXDS"
_BIN_VERSION = 1


def _as_table(ds: Dataset) -> np.ndarray:
    return np.column_stack([ds.X, ds.y, ds.category, ds.voxel, ds.timestep]).astype("<f8")


def _from_table(table, provenance) -> Dataset:
    n = N_FEATURES
    return Dataset(
        np.ascontiguousarray(table[:, :n]), table[:, n].copy(), table[:, n + 1].astype(np.int8),
        table[:, n + 2:n + 5].astype(np.int64), table[:, n + 5].astype(np.int64), provenance,
    )


def save_dataset(ds: Dataset, path, fmt: str = "text") -> None:
    path = os.fspath(path)
    table = _as_table(ds)
    try:
        if fmt == "text":
            with open(path, "w") as fh:
                fh.write(f"# voxtherm-dataset v1 provenance={ds.provenance}\n")
                # neighbour names contain commas, so the header is CSV-quoted
                csv.writer(fh, lineterminator="\n").writerow(DATASET_COLUMNS)
                if len(table):
                    fmts = ["%.17g"] * (N_FEATURES + 1) + ["%d"] * 5
                    np.savetxt(fh, table, fmt=fmts, delimiter=",")
        elif fmt == "binary":
            meta = json.dumps({"columns": list(DATASET_COLUMNS), "provenance": ds.provenance}).encode()
            with open(path, "wb") as fh:
                fh.write(_BIN_MAGIC)
                fh.write(struct.pack("<HIQI", _BIN_VERSION, table.shape[1], table.shape[0], len(meta)))
                fh.write(meta)
                fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())
        else:
            raise ValueError(f"unknown dataset format {fmt!r}")
    except OSError as exc:
        raise FormatError(f"cannot write dataset {path}: {exc}") from exc


def load_dataset(path) -> Dataset:
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
        if head == _BIN_MAGIC:
            return _load_binary(path)
        return _load_text(path)
    except OSError as exc:
        raise FormatError(f"cannot read dataset {path}: {exc}") from exc


def _load_binary(path):
    with open(path, "rb") as fh:
        fh.read(4)
        try:
            version, n_cols, n_rows, meta_len = struct.unpack("<HIQI", fh.read(18))
            if version != _BIN_VERSION:
                raise FormatError(f"{path}: unsupported dataset version {version}")
            meta = json.loads(fh.read(meta_len))
        except (struct.error, ValueError) as exc:
            raise FormatError(f"{path}: corrupt dataset header: {exc}") from exc
        if tuple(meta["columns"]) != DATASET_COLUMNS:
            raise FormatError(f"{path}: column layout differs from this build")
        table = np.frombuffer(fh.read(), dtype="<f8")
    if table.size != n_rows * n_cols:
        raise FormatError(f"{path}: truncated ({table.size} values, expected {n_rows * n_cols})")
    return _from_table(table.reshape(n_rows, n_cols).astype(np.float64), meta.get("provenance", ""))


def _load_text(path):
    with open(path) as fh:
        first = fh.readline()
        provenance = ""
        if first.startswith("#"):
            provenance = first.partition("provenance=")[2].rstrip("\n")
            first = fh.readline()
        if tuple(next(csv.reader([first]), [])) != DATASET_COLUMNS:
            raise FormatError(f"{path}: header does not match the dataset column layout")
        try:
            table = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    if table.size == 0:
        table = np.empty((0, len(DATASET_COLUMNS)))
    return _from_table(table, provenance)
