"""Staged iterative forecasting and the single-shot direct baseline.

Both modes see ground truth only through ``history.frame(t)`` for ``t <= m``.
Everything later comes from the deposition schedule (a known control input)
or from the model's own committed predictions.
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .baselines import BaselineModel, fit_model
from .core import DepositionSchedule, ThermalHistory, VoxelIndex
from .ert import TrainConfig
from .errors import ContractError, FormatError, NumericalError, StageError, VoxthermError
from .features import FEATURE_NAMES, N_FEATURES, RunLabels, step_features

RESULT_HEADER = "timestep,ix,iy,iz,predicted_K,truth_K,stage"


class ForecastMode(str, Enum):
    ITERATIVE = "iterative"
    DIRECT = "direct"


@dataclass(frozen=True)
class ForecastConfig:
    train_horizon: int
    predict_horizon: int
    stage_interval: int = 20
    learner: TrainConfig | BaselineModel = field(default_factory=TrainConfig)
    mode: ForecastMode = ForecastMode.ITERATIVE

    def __post_init__(self):
        if self.train_horizon < 1:
            raise ContractError(f"train_horizon must be >= 1, got {self.train_horizon}")
        if self.predict_horizon < 1:
            raise ContractError(f"predict_horizon must be >= 1, got {self.predict_horizon}")
        if not 1 <= self.stage_interval <= self.predict_horizon:
            raise ContractError(
                f"stage_interval must lie in [1, {self.predict_horizon}], got {self.stage_interval}")
        object.__setattr__(self, "mode", ForecastMode(self.mode))

    @property
    def n_stages(self) -> int:
        if self.mode is ForecastMode.DIRECT:
            return 1
        return math.ceil(self.predict_horizon / self.stage_interval)

    @property
    def last_step(self) -> int:
        return self.train_horizon + self.predict_horizon


@dataclass(frozen=True)
class StageRecord:
    stage: int
    first_step: int
    last_step: int
    train_rows: int
    rows_predicted: int
    train_seconds: float
    predict_seconds: float


@dataclass(frozen=True, eq=False)
class ForecastResult:
    """Predictions for every active (voxel, t) with ``m < t <= m + H``.

    Rows are grouped by timestep ascending, C order within a timestep.
    """

    timestep: np.ndarray
    voxel: np.ndarray
    predicted: np.ndarray
    stage: np.ndarray
    stages: tuple[StageRecord, ...]
    mode: ForecastMode
    truth: np.ndarray | None = None

    def __len__(self):
        return len(self.predicted)

    def stage_of(self, t: int) -> int:
        for rec in self.stages:
            if rec.first_step <= t <= rec.last_step:
                return rec.stage
        raise ContractError(f"timestep {t} is outside the forecast horizon")

    @property
    def predictions(self) -> dict[tuple[VoxelIndex, int], float]:
        return {(VoxelIndex(*map(int, v)), int(t)): float(p)
                for v, t, p in zip(self.voxel, self.timestep, self.predicted)}

    @property
    def train_seconds(self) -> float:
        return sum(r.train_seconds for r in self.stages)

    @property
    def predict_seconds(self) -> float:
        return sum(r.predict_seconds for r in self.stages)

    def with_truth(self, truth) -> "ForecastResult":
        return ForecastResult(self.timestep, self.voxel, self.predicted, self.stage, self.stages,
                              self.mode, np.asarray(truth, dtype=np.float64))

    def until(self, t_max: int) -> "ForecastResult":
        """Prefix of the result covering ``t <= t_max`` (stages clipped)."""
        keep = self.timestep <= t_max
        stages = tuple(r for r in self.stages if r.first_step <= t_max)
        truth = None if self.truth is None else self.truth[keep]
        return ForecastResult(self.timestep[keep], self.voxel[keep], self.predicted[keep],
                              self.stage[keep], stages, self.mode, truth)

    def identical_to(self, other: "ForecastResult") -> bool:
        return (self.mode == other.mode
                and all(np.array_equal(getattr(self, a), getattr(other, a))
                        for a in ("timestep", "voxel", "predicted", "stage")))


class _Record:
    """Padded temperature record mixing truth (t <= m) and committed predictions."""

    def __init__(self, history: ThermalHistory, schedule: DepositionSchedule, m: int, last: int):
        grid = history.grid
        self.schedule = schedule
        self.labels = RunLabels.of(history)
        self.pad = np.full((last + 1,) + tuple(s + 2 for s in grid.shape), np.nan)
        for t in range(m + 1):
            self.pad[t, 1:-1, 1:-1, 1:-1] = history.frame(t)

    def rows(self, t):
        vox = self.schedule.active_voxels(t)
        creation = self.schedule.creation_step[tuple(vox.T)]
        X = step_features(self.pad, t, vox, creation, self.schedule.laser_path[t], self.labels)
        return vox, X

    def value(self, t, vox):
        return self.pad[t][tuple((vox + 1).T)]

    def commit(self, t, vox, values):
        self.pad[t][tuple((vox + 1).T)] = values


def _check_inputs(history: ThermalHistory, schedule: DepositionSchedule, config: ForecastConfig):
    m = config.train_horizon
    if history.grid != schedule.grid:
        raise ContractError(f"grid mismatch: history {history.grid} vs schedule {schedule.grid}")
    if history.n_timesteps <= m:
        raise ContractError(f"history ends at timestep {history.final_step}, need truth through {m}")
    if schedule.end_step < config.last_step:
        raise ContractError(
            f"schedule ends at timestep {schedule.end_step}, horizon needs {config.last_step}")


def _fit(learner, X, y, stage):
    try:
        return fit_model(learner, X, y, FEATURE_NAMES)
    except VoxthermError as exc:
        raise StageError(stage, exc) from exc


def _predict(model, X, t, stage):
    out = model.predict(X)
    bad = np.flatnonzero(~np.isfinite(out))
    if len(bad):
        raise NumericalError(f"stage {stage}: non-finite prediction at timestep {t}", timestep=t)
    return out


def _truth_rows(rec: _Record, m: int):
    Xs, ys = [], []
    for t in range(m + 1):
        vox, X = rec.rows(t)
        if len(vox):
            Xs.append(X)
            ys.append(rec.value(t, vox))
    if not Xs:
        return np.empty((0, N_FEATURES)), np.empty(0)
    return np.vstack(Xs), np.concatenate(ys)


def iterative_forecast(history: ThermalHistory, schedule: DepositionSchedule,
                       config: ForecastConfig) -> ForecastResult:
    """Retrain every ``stage_interval`` steps on truth plus committed predictions.

    Inside a stage each timestep is predicted from the record at ``t-1 .. t-5``
    and committed before moving on, so later steps consume earlier predictions.
    """
    _check_inputs(history, schedule, config)
    m, H, d = config.train_horizon, config.predict_horizon, config.stage_interval
    rec = _Record(history, schedule, m, config.last_step)
    X0, y0 = _truth_rows(rec, m)
    train_X, train_y = [X0], [y0]
    n_train = len(y0)
    out_t, out_v, out_p, out_s, stages = [], [], [], [], []
    for s in range(1, math.ceil(H / d) + 1):
        first = m + (s - 1) * d + 1
        last = min(m + s * d, m + H)
        t0 = time.perf_counter()
        X = np.vstack(train_X) if len(train_X) > 1 else train_X[0]
        y = np.concatenate(train_y) if len(train_y) > 1 else train_y[0]
        train_X, train_y = [X], [y]
        model = _fit(config.learner, X, y, s)
        t1 = time.perf_counter()
        n_pred = 0
        for t in range(first, last + 1):
            vox, Xt = rec.rows(t)
            if not len(vox):
                continue
            pred = _predict(model, Xt, t, s)
            rec.commit(t, vox, pred)
            train_X.append(Xt)
            train_y.append(pred)
            out_t.append(np.full(len(vox), t, dtype=np.int64))
            out_v.append(vox)
            out_p.append(pred)
            out_s.append(np.full(len(vox), s, dtype=np.int64))
            n_pred += len(vox)
        t2 = time.perf_counter()
        stages.append(StageRecord(s, first, last, n_train, n_pred, t1 - t0, t2 - t1))
        n_train += n_pred
    return _result(out_t, out_v, out_p, out_s, stages, ForecastMode.ITERATIVE)


def direct_forecast(history: ThermalHistory, schedule: DepositionSchedule,
                    config: ForecastConfig) -> ForecastResult:
    """Train once on ``t <= m`` and predict the whole horizon in one pass.

    Temperature features whose lookup time exceeds ``m`` are sentinel; nothing
    predicted is fed back.
    """
    _check_inputs(history, schedule, config)
    m = config.train_horizon
    rec = _Record(history, schedule, m, config.last_step)
    X0, y0 = _truth_rows(rec, m)
    t0 = time.perf_counter()
    model = _fit(config.learner, X0, y0, 1)
    t1 = time.perf_counter()
    ts, vs, Xs = [], [], []
    for t in range(m + 1, config.last_step + 1):
        vox, Xt = rec.rows(t)
        if len(vox):
            ts.append(np.full(len(vox), t, dtype=np.int64))
            vs.append(vox)
            Xs.append(Xt)
    if Xs:
        pred = _predict(model, np.vstack(Xs), m + 1, 1)
    else:
        pred = np.empty(0)
    t2 = time.perf_counter()
    n = len(pred)
    stage = StageRecord(1, m + 1, config.last_step, len(y0), n, t1 - t0, t2 - t1)
    return _result(ts, vs, [pred], [np.ones(n, dtype=np.int64)], [stage], ForecastMode.DIRECT)


def _result(ts, vs, ps, ss, stages, mode) -> ForecastResult:
    if not ts:
        return ForecastResult(np.empty(0, np.int64), np.empty((0, 3), np.int64), np.empty(0),
                              np.empty(0, np.int64), tuple(stages), mode)
    return ForecastResult(np.concatenate(ts), np.vstack(vs), np.concatenate(ps),
                          np.concatenate(ss), tuple(stages), mode)


def forecast(history: ThermalHistory, schedule: DepositionSchedule,
             config: ForecastConfig) -> ForecastResult:
    if config.mode is ForecastMode.DIRECT:
        return direct_forecast(history, schedule, config)
    return iterative_forecast(history, schedule, config)


def stage_report(result: ForecastResult) -> list[dict]:
    """One dict per stage plus a final ``total`` row."""
    rows = [{
        "stage": r.stage, "first_step": r.first_step, "last_step": r.last_step,
        "train_rows": r.train_rows, "rows_predicted": r.rows_predicted,
        "train_seconds": r.train_seconds, "predict_seconds": r.predict_seconds,
    } for r in result.stages]
    rows.append({
        "stage": "total",
        "first_step": result.stages[0].first_step if result.stages else None,
        "last_step": result.stages[-1].last_step if result.stages else None,
        "train_rows": sum(r.train_rows for r in result.stages),
        "rows_predicted": sum(r.rows_predicted for r in result.stages),
        "train_seconds": result.train_seconds,
        "predict_seconds": result.predict_seconds,
    })
    return rows


def format_stage_report(result: ForecastResult) -> str:
    cols = ("stage", "first_step", "last_step", "train_rows", "rows_predicted",
            "train_seconds", "predict_seconds")
    lines = ["\t".join(cols)]
    for row in stage_report(result):
        lines.append("\t".join(f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# result file
# --------------------------------------------------------------------------

def save_result(result: ForecastResult, path) -> None:
    truth = result.truth if result.truth is not None else np.full(len(result), np.nan)
    try:
        with open(path, "w") as fh:
            fh.write(f"# voxtherm-forecast mode={result.mode.value}\n")
            fh.write(RESULT_HEADER + "\n")
            for t, v, p, tr, s in zip(result.timestep, result.voxel, result.predicted, truth, result.stage):
                fh.write(f"{t},{v[0]},{v[1]},{v[2]},{p:.17g},{tr:.17g},{s}\n")
    except OSError as exc:
        raise FormatError(f"cannot write forecast {os.fspath(path)}: {exc}") from exc


def load_result(path) -> ForecastResult:
    """Read a result file; stage timings are not stored and come back as zero."""
    try:
        with open(path) as fh:
            first = fh.readline()
            header = fh.readline().strip()
            body = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read forecast {os.fspath(path)}: {exc}") from exc
    if not first.startswith("# voxtherm-forecast") or header != RESULT_HEADER:
        raise FormatError(f"{os.fspath(path)} is not a voxtherm forecast file")
    mode = ForecastMode(first.split("mode=", 1)[1].strip())
    table = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2) if body.strip() else np.empty((0, 7))
    t = table[:, 0].astype(np.int64)
    stage = table[:, 6].astype(np.int64)
    stages = []
    for s in np.unique(stage):
        ts = t[stage == s]
        stages.append(StageRecord(int(s), int(ts.min()), int(ts.max()), 0, len(ts), 0.0, 0.0))
    truth = table[:, 5]
    return ForecastResult(t, table[:, 1:4].astype(np.int64), table[:, 4].copy(), stage, tuple(stages),
                          mode, None if np.isnan(truth).all() else truth.copy())
