"""Canned desk-scale experiment protocols behind ``voxtherm bench``.

Every protocol runs on the same 20x20x4 simulated build (default material,
laser and solver settings) and returns a ``Table``. Learner randomness comes
from ``seed``; the simulation itself is deterministic.

    table1      learner comparison, train t <= 200, score 200 < t <= 500
    table2      iterative forecast for several train horizons, m + H = 600
    table3      iterative vs direct forecast, m = 200, H in {200, 400}
    table4      per-category breakdown of the m = 200, H = 300 iterative run
    table5      tree count sweep, same split as table1
    importance  mean feature importances of the first-stage model

table1 and table5 score one-step predictions made from true features (the
learners are compared on identical inputs); the forecast tables feed
predictions back as the pipeline does.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .baselines import BaselineModel, fit_model
from .core import GridSpec, LaserParams, build_zigzag_schedule
from .ert import TrainConfig, fit
from .errors import ConfigError, VoxthermError
from .features import FEATURE_NAMES, Dataset, VoxelCategory, build_dataset
from .forecast import ForecastConfig, ForecastMode, ForecastResult, forecast
from .metrics import evaluate, mape_percent, nmae_percent, r_squared
from .simulator import SimConfig, run

DESK_GRID = GridSpec(20, 20, 4)
# 10 trees keeps a five-seed H=400 iterative sweep inside ten minutes on one core
DESK_TREES = TrainConfig(n_trees=10, min_samples_leaf=5)


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values))

    def column(self, name) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_tsv(self) -> str:
        def fmt(v):
            if isinstance(v, float):
                return f"{v:.6g}"
            return str(v)
        lines = ["\t".join(self.columns)]
        lines += ["\t".join(fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=4)
def desk_build(tail_steps: int = 0):
    """(history, schedule, dataset) for the desk build, cached per process."""
    laser = LaserParams()
    sim = SimConfig(DESK_GRID, laser=laser)
    history = run(sim, build_zigzag_schedule(DESK_GRID, laser), tail_steps=tail_steps)
    schedule = history.schedule()
    return history, schedule, build_dataset(history, schedule, provenance="desk")


def split_rows(ds: Dataset, m: int, H: int) -> tuple[Dataset, Dataset]:
    """Rows with t <= m for training and m < t <= m + H for scoring."""
    return ds.until(m), ds.select((ds.timestep > m) & (ds.timestep <= m + H))


def one_step_score(learner, train: Dataset, test: Dataset) -> dict:
    """Fit on ``train`` and score predictions for ``test`` made from its true features."""
    t0 = time.perf_counter()
    model = fit_model(learner, train.X, train.y, train.feature_names)
    t1 = time.perf_counter()
    pred = model.predict(test.X)
    t2 = time.perf_counter()
    return {
        "model": model,
        "train_seconds": t1 - t0,
        "predict_seconds": t2 - t1,
        "r2": r_squared(test.y, pred),
        "mape_percent": mape_percent(test.y, pred),
        "nmae_percent": nmae_percent(test.y, pred),
    }


def desk_learner(seed, **changes) -> TrainConfig:
    return replace(DESK_TREES, seed=seed, **changes)


def run_forecast(m, H, seed, mode=ForecastMode.ITERATIVE, delta=20, learner=None) -> ForecastResult:
    history, schedule, _ = desk_build(max(0, m + H - desk_build()[0].final_step))
    cfg = ForecastConfig(m, H, delta, learner or desk_learner(seed), mode)
    return forecast(history, schedule, cfg)


def baseline_learners(seed):
    return [
        ("ols", BaselineModel.ordinary_least_squares()),
        ("ridge", BaselineModel.ridge(1.0)),
        ("lasso", BaselineModel.lasso(1.0)),
        ("decision_tree", BaselineModel.single_decision_tree(seed=seed)),
        ("random_forest", BaselineModel.random_forest(n_trees=DESK_TREES.n_trees, seed=seed)),
        ("extremely_randomized_trees", desk_learner(seed)),
    ]


def table1(seed=0, m=200, H=300) -> Table:
    _, _, ds = desk_build()
    train, test = split_rows(ds, m, H)
    out = Table(("algorithm", "train_seconds", "r2", "mape_percent", "nmae_percent"))
    for name, learner in baseline_learners(seed):
        try:
            s = one_step_score(learner, train, test)
        except VoxthermError:
            # e.g. OLS on a rank-deficient design
            out.add(name, float("nan"), float("nan"), float("nan"), float("nan"))
            continue
        out.add(name, s["train_seconds"], s["r2"], s["mape_percent"], s["nmae_percent"])
    return out


def _forecast_row(result, history):
    rep = evaluate(result, history)
    return rep, result.train_seconds + result.predict_seconds


def table2(seed=0, total=600, train_horizons=(500, 400, 250, 150)) -> Table:
    out = Table(("train_horizon", "predict_horizon", "r2", "mape_percent", "nmae_percent", "runtime_seconds"))
    for m in train_horizons:
        res = run_forecast(m, total - m, seed)
        rep, secs = _forecast_row(res, desk_build()[0])
        out.add(m, total - m, rep.r2, rep.mape_percent, rep.nmae_percent, secs)
    return out


def headline(seed=0, m=200, horizons=(200, 400)) -> dict:
    """{(mode, H): EvalReport}; shorter horizons are prefixes of the longest run."""
    history = desk_build()[0]
    longest = max(horizons)
    reports = {}
    for mode in ForecastMode:
        res = run_forecast(m, longest, seed, mode)
        for H in horizons:
            reports[(mode, H)] = evaluate(res.until(m + H), history)
    return reports


def table3(seed=0, m=200, horizons=(200, 400)) -> Table:
    out = Table(("mode", "predict_horizon", "r2", "mape_percent", "nmae_percent", "runtime_seconds"))
    for (mode, H), rep in headline(seed, m, horizons).items():
        out.add(mode.value, H, rep.r2, rep.mape_percent, rep.nmae_percent, rep.runtime_seconds)
    return out


def table4(seed=0, m=200, H=300) -> Table:
    history, _, ds = desk_build()
    rep = evaluate(run_forecast(m, H, seed), history, ds)
    out = Table(("category", "share_percent", "r2", "mape_percent", "n_rows"))
    for cat, st in rep.per_category.items():
        out.add(cat.label, st.share_percent, st.r2, st.mape_percent, st.n_rows)
    out.add("overall", 100.0, rep.r2, rep.mape_percent, rep.n_rows)
    return out


def table5(seeds=range(10), tree_counts=(4, 10, 20, 50), m=200, H=300) -> Table:
    _, _, ds = desk_build()
    train, test = split_rows(ds, m, H)
    out = Table(("n_trees", "train_seconds", "r2", "mape_percent", "mape_std", "n_seeds"))
    for n in tree_counts:
        scores = [one_step_score(desk_learner(s, n_trees=n), train, test) for s in seeds]
        mape = np.array([s["mape_percent"] for s in scores])
        out.add(n, float(np.mean([s["train_seconds"] for s in scores])),
                float(np.mean([s["r2"] for s in scores])), float(mape.mean()), float(mape.std()), len(scores))
    return out


def importance(seeds=range(5), m=200) -> Table:
    _, _, ds = desk_build()
    train = ds.until(m)
    imps = np.array([fit(train, desk_learner(s)).importances for s in seeds])
    mean = imps.mean(axis=0)
    out = Table(("feature", "importance", "importance_std"))
    for i in sorted(range(len(FEATURE_NAMES)), key=lambda i: (-mean[i], i)):
        out.add(FEATURE_NAMES[i], float(mean[i]), float(imps[:, i].std()))
    return out


def completed_build_shares() -> dict[VoxelCategory, float]:
    """Category shares (percent) over every row of the completed desk build."""
    _, _, ds = desk_build()
    counts = np.bincount(ds.category, minlength=len(VoxelCategory))
    return {c: 100.0 * counts[c] / len(ds) for c in VoxelCategory}


PROTOCOLS = {
    "table1": lambda seed: table1(seed),
    "table2": lambda seed: table2(seed),
    "table3": lambda seed: table3(seed),
    "table4": lambda seed: table4(seed),
    "table5": lambda seed: table5(range(seed, seed + 10)),
    "importance": lambda seed: importance(range(seed, seed + 5)),
}


def run_protocol(name: str, seed: int = 0) -> Table:
    if name not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {name!r}; valid: {', '.join(PROTOCOLS)}")
    return PROTOCOLS[name](seed)
