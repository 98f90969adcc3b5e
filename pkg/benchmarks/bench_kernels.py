"""Wall-clock comparison of the numba kernels against the numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times one desk-scale heat diffusion sweep, a tree-growing fit and forest
prediction on each backend, and checks the two backends agree bit for bit.
"""
import argparse
import time

import numpy as np

from voxtherm.core import GridSpec
from voxtherm.ert import TrainConfig, fit
from voxtherm.experiments import desk_build
from voxtherm.simulator import SimConfig, diffuse


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--rows", type=int, default=20000, help="training rows for the tree benchmarks")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    grid = GridSpec(20, 20, 4)
    cfg = SimConfig(grid)
    T = rng.uniform(300, 1900, grid.shape)
    active = np.ones(grid.shape, dtype=bool)

    _, _, ds = desk_build()
    sub = ds.select(slice(0, min(args.rows, len(ds))))
    train_cfg = TrainConfig(n_trees=2, seed=0)

    cases = {
        "diffuse 20x20x4, 100 substeps": lambda nb: diffuse(T, active, cfg, n_sub=100, use_numba=nb),
        f"fit 2 trees, {len(sub)} rows": lambda nb: fit(sub, train_cfg, use_numba=nb),
    }
    print(f"{'case':<34}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, fn in cases.items():
        fn(True)  # compile
        t_nb, a = best_of(lambda: fn(True), args.repeat)
        t_np, b = best_of(lambda: fn(False), args.repeat)
        same = np.array_equal(a, b) if isinstance(a, np.ndarray) else a.identical_to(b)
        print(f"{name:<34}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x{'' if same else '  MISMATCH'}")

    forest = fit(sub, train_cfg)
    forest.predict(sub.X[:10], use_numba=True)
    t_nb, a = best_of(lambda: forest.predict(sub.X, use_numba=True), args.repeat)
    t_np, b = best_of(lambda: forest.predict(sub.X, use_numba=False), args.repeat)
    flag = "" if np.array_equal(a, b) else "  MISMATCH"
    print(f"{f'predict {len(sub)} rows':<34}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x{flag}")


if __name__ == "__main__":
    main()
