"""Acceptance suite: one test per criterion, each recording a pass/fail line.

The desk experiments share the cached 20x20x4 build from ``experiments``.
Thresholds are the contract's; measured values go into the summary line
whether or not they pass.
"""
import time

import numpy as np
import pytest

from voxtherm import experiments as E
from voxtherm.core import GridSpec, build_zigzag_schedule, load_history, save_history
from voxtherm.ert import Leaf, TrainConfig, fit, fit_arrays, load_forest, save_forest
from voxtherm.features import VoxelCategory, build_dataset, load_dataset, save_dataset
from voxtherm.forecast import ForecastConfig, ForecastMode, forecast
from voxtherm.metrics import evaluate
from voxtherm.simulator import SimConfig, diffuse, thermal_energy

from test_ert import brute_predict, brute_tree

SEEDS = range(5)


# -- 1: physics ----------------------------------------------------------------

def test_criterion_1_physics(criterion, rng):
    t0 = time.perf_counter()
    cfg = SimConfig(GridSpec(6, 5, 4), convection=False, substrate_contact=False)
    T = rng.uniform(300, 1900, cfg.grid.shape)
    active = np.ones(cfg.grid.shape, dtype=bool)
    e0 = thermal_energy(T, active, cfg)
    worst = 0.0
    prev = e0
    for _ in range(1000):
        T = diffuse(T, active, cfg, n_sub=1)
        e = thermal_energy(T, active, cfg)
        worst = max(worst, abs(e - prev) / abs(prev))
        prev = e

    # 1-D column on the substrate, top held at 1900: linear from the ghost node
    n = 8
    col = SimConfig(GridSpec(1, 1, n), convection=False)
    Tc = np.full((1, 1, n), 300.0)
    Tc[0, 0, -1] = 1900.0
    pinned = np.zeros_like(Tc, dtype=bool)
    pinned[0, 0, -1] = True
    Tc = diffuse(Tc, np.ones_like(pinned), col, n_sub=20000, pinned=pinned)
    exact = 300.0 + 1600.0 * (np.arange(n) + 1) / n
    linf = float(np.max(np.abs(Tc.ravel() - exact) / exact))
    secs = time.perf_counter() - t0

    ok = worst <= 1e-9 and linf <= 5e-3 and secs < 10
    criterion(1, ok, f"energy drift/step {worst:.2e} (<=1e-9), steady-state L_inf {100 * linf:.4f}% (<=0.5%), "
                     f"{secs:.1f} s (<10 s)")
    assert ok


# -- 2: learner ------------------------------------------------------------------

def test_criterion_2_learner(criterion):
    rng = np.random.default_rng(0)
    sigma = 0.01
    x = rng.uniform(0, 1, 400)
    y = (x > 0.5).astype(float) + rng.normal(0, sigma, 400)
    forest = fit_arrays(x[:, None], y, TrainConfig(n_trees=1, min_samples_leaf=1, seed=3))
    p = forest.predict(x[:, None])
    r2 = 1 - np.sum((y - p) ** 2) / np.sum((y - y.mean()) ** 2)

    q = np.linspace(0, 1, 201)
    q = q[np.abs(q - 0.5) > 0.02]
    brute = brute_tree(x, y, 1)
    gap = float(np.mean(np.abs(forest.predict(q[:, None]) - [brute_predict(brute, v) for v in q])))

    X = rng.normal(size=(120, 3))
    # integer targets: every summation order gives the same bits, so the identity is exact
    t = np.round(100 * (X[:, 0] * 2 + rng.normal(size=120)))
    leafy = fit_arrays(X, t, TrainConfig(n_trees=1, min_samples_leaf=6, seed=1))

    def leaf_means(node, mask):
        if isinstance(node, Leaf):
            return node.n_samples == mask.sum() and node.prediction == t[mask].mean()
        go = X[:, node.feature_index] <= node.threshold
        return leaf_means(node.left, mask & go) and leaf_means(node.right, mask & ~go)

    means_ok = leaf_means(leafy.tree(0), np.ones(len(t), dtype=bool))
    const = fit_arrays(X, np.full(120, 301.25), TrainConfig(n_trees=2))
    const_ok = all(tree == Leaf(301.25, 120) for tree in const.trees)

    ok = r2 >= 0.99 and gap <= 3 * sigma and means_ok and const_ok
    criterion(2, ok, f"train R2 {r2:.5f} (>=0.99), mean |tree - brute| {gap:.4f} (<= {3 * sigma}), "
                     f"leaf means exact {means_ok}, constant target {const_ok}")
    assert ok


# -- 3, 6: headline forecasts ----------------------------------------------------

@pytest.fixture(scope="module")
def headline_runs():
    """{(seed, mode): ForecastResult} for m=200, H=400, delta=20, plus total wall time."""
    t0 = time.perf_counter()
    E.desk_build()
    runs = {(s, mode): E.run_forecast(200, 400, s, mode) for s in SEEDS for mode in ForecastMode}
    return runs, time.perf_counter() - t0


def test_criterion_3_iterative_beats_direct(criterion, headline_runs):
    runs, secs = headline_runs
    history = E.desk_build()[0]
    mean = {}
    for mode in ForecastMode:
        for H in (200, 400):
            mean[mode, H] = float(np.mean([evaluate(runs[s, mode].until(200 + H), history).mape_percent
                                           for s in SEEDS]))
    ratio_ok = all(mean[ForecastMode.ITERATIVE, H] < 0.5 * mean[ForecastMode.DIRECT, H] for H in (200, 400))
    abs_ok = all(mean[ForecastMode.ITERATIVE, H] <= 3.0 for H in (200, 400))
    ok = ratio_ok and abs_ok and secs < 600
    parts = ", ".join(f"H={H}: iterative {mean[ForecastMode.ITERATIVE, H]:.3f}% vs direct "
                      f"{mean[ForecastMode.DIRECT, H]:.3f}%" for H in (200, 400))
    criterion(3, ok, f"{parts}; ratio<0.5 {ratio_ok}, iterative<=3.0 {abs_ok}, {secs:.0f} s (<600 s)")
    assert ok


def test_criterion_6_category_uniformity(criterion, headline_runs):
    runs, _ = headline_runs
    history, _, ds = E.desk_build()
    rep = evaluate(runs[0, ForecastMode.ITERATIVE].until(500), history, ds)
    worst = max(st.mape_percent / rep.mape_percent
                for st in rep.per_category.values() if st.share_percent >= 1.0)
    shares = E.completed_build_shares()
    vi = shares[VoxelCategory.EDGE_VERTICAL] + shares[VoxelCategory.INTERIOR]
    ok = worst <= 2.0 and vi > 70.0
    cats = ", ".join(f"{c.label} {st.mape_percent:.3f}% ({st.share_percent:.1f}%)"
                     for c, st in rep.per_category.items())
    criterion(6, ok, f"overall {rep.mape_percent:.3f}%; {cats}; worst ratio {worst:.2f} (<=2); "
                     f"EdgeVertical+Interior share {vi:.1f}% (>70%)")
    assert ok


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_longer_training(criterion):
    rep = evaluate(E.run_forecast(400, 200, 0), E.desk_build()[0])
    ok = rep.mape_percent <= 1.5
    criterion(4, ok, f"m=400 H=200 iterative MAPE {rep.mape_percent:.3f}% (<=1.5%)")
    assert ok


# -- 5 ------------------------------------------------------------------------

def test_criterion_5_tree_count(criterion):
    table = E.table5()
    n, mape = table.column("n_trees"), table.column("mape_percent")
    monotone = all(b <= a for a, b in zip(mape, mape[1:]))
    ratio = mape[-1] / mape[0]
    ok = n == [4, 10, 20, 50] and monotone and ratio <= 0.75
    path = " -> ".join(f"{m:.4f}" for m in mape)
    criterion(5, ok, f"MAPE over 10 seeds for {n} trees: {path}; non-increasing {monotone}, "
                     f"50/4 ratio {ratio:.3f} (<=0.75)")
    assert ok


# -- 7 ------------------------------------------------------------------------

def test_criterion_7_importance(criterion):
    imp = dict(zip(*[E.importance().column(c) for c in ("feature", "importance")]))
    x = max(imp["T_immediate_(x-1)"], imp["T_immediate_(x+1)"])
    yp, ym = imp["T_immediate_(y+1)"], imp["T_immediate_(y-1)"]
    rel = abs(yp - ym) / max(yp, ym)
    ok = x > max(yp, ym) and rel <= 0.25
    criterion(7, ok, f"max x-neighbor {x:.4f} vs max y-neighbor {max(yp, ym):.4f} (x > y {x > max(yp, ym)}); "
                     f"y+1 {yp:.4f} / y-1 {ym:.4f} differ {100 * rel:.1f}% (<=25%)")
    assert ok


# -- 8 ------------------------------------------------------------------------

def test_criterion_8_baselines(criterion):
    table = E.table1()
    row = {r[0]: dict(zip(table.columns, r)) for r in table.rows}
    m = {k: v["mape_percent"] for k, v in row.items()}
    linear = np.nanmin([m["ols"], m["ridge"], m["lasso"]])
    order_ok = m["extremely_randomized_trees"] <= m["random_forest"] <= m["decision_tree"] <= linear
    t_ert, t_rf = row["extremely_randomized_trees"]["train_seconds"], row["random_forest"]["train_seconds"]
    time_ok = t_ert <= 1.25 * t_rf
    ok = order_ok and time_ok
    criterion(8, ok, "MAPE " + ", ".join(f"{k} {v:.3f}%" for k, v in m.items())
              + f"; ordering {order_ok}; train ERT {t_ert:.1f} s vs RF {t_rf:.1f} s ({time_ok})")
    assert ok


# -- 9 ------------------------------------------------------------------------

def test_criterion_9_determinism(criterion, tmp_path):
    grid = GridSpec(6, 6, 2)
    cfg = SimConfig(grid)
    from voxtherm.simulator import run

    checks = {}
    a = run(cfg, build_zigzag_schedule(grid, cfg.laser), tail_steps=4)
    b = run(cfg, build_zigzag_schedule(grid, cfg.laser), tail_steps=4)
    checks["simulate"] = np.array_equal(a.temperatures, b.temperatures, equal_nan=True)
    save_history(a, tmp_path / "h.csv")
    h = load_history(tmp_path / "h.csv")
    checks["history file"] = np.array_equal(h.temperatures, a.temperatures, equal_nan=True)

    ds = build_dataset(h)
    for fmt, name in (("text", "d.csv"), ("binary", "d.bin")):
        save_dataset(ds, tmp_path / name, fmt=fmt)
        back = load_dataset(tmp_path / name)
        checks[f"{fmt} dataset"] = (np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
                                    and np.array_equal(back.timestep, ds.timestep)
                                    and np.array_equal(back.voxel, ds.voxel)
                                    and np.array_equal(back.category, ds.category))
        save_dataset(build_dataset(b), tmp_path / ("again_" + name), fmt=fmt)
        checks[f"{fmt} bytes"] = (tmp_path / name).read_bytes() == (tmp_path / ("again_" + name)).read_bytes()

    tc = TrainConfig(n_trees=3, seed=9)
    f1, f2 = fit(ds, tc), fit(ds, tc)
    save_forest(f1, tmp_path / "m.vxf")
    checks["train"] = f1.identical_to(f2) and load_forest(tmp_path / "m.vxf").identical_to(f1)
    for mode in ForecastMode:
        fc = ForecastConfig(20, 20, 10, tc, mode)
        checks[f"{mode.value} forecast"] = forecast(a, a.schedule(), fc).identical_to(forecast(h, h.schedule(), fc))

    ok = all(checks.values())
    criterion(9, ok, ", ".join(f"{k} {'ok' if v else 'DIFFERS'}" for k, v in checks.items()))
    assert ok
