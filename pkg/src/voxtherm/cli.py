"""Command-line front end.

    voxtherm simulate   [--config INI] [--set section.key=value ...] --out DIR
    voxtherm dataset    HISTORY --out DIR [--format text|binary]
    voxtherm train      DATASET --out DIR [--until T]
    voxtherm forecast   HISTORY --out DIR [--mode iterative|direct] [-m M] [-H H] [--delta D]
    voxtherm evaluate   PREDICTIONS HISTORY [--dataset DATASET] [--scatter FILE]
    voxtherm bench      PROTOCOL --out DIR
    voxtherm importance-export MODEL --out FILE

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure,
4 file I/O or format error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import experiments
from .config import RunConfig
from .core import build_zigzag_schedule, load_history, save_history, schedule_row_count
from .ert import feature_importances, fit, load_forest, save_forest
from .errors import ConfigError, FormatError, VoxthermError
from .features import build_dataset, load_dataset, save_dataset
from .forecast import format_stage_report, forecast, load_result, save_result
from .metrics import evaluate, export_scatter, truth_for
from .simulator import run

log = logging.getLogger("voxtherm")

# short flags that map onto RunConfig keys
_ALIASES = {
    "seed": "run.seed",
    "format": "run.format",
    "n_trees": "train.n_trees",
    "k": "train.k_candidate_features",
    "min_samples_leaf": "train.min_samples_leaf",
    "mode": "forecast.mode",
    "m": "forecast.train_horizon",
    "H": "forecast.predict_horizon",
    "delta": "forecast.stage_interval",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=str)
    p.add_argument("-v", "--verbose", action="store_true")


def _out(p, required=True):
    p.add_argument("--out", required=required, help="output directory")


def _resolve(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for flag, dotted in _ALIASES.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[dotted] = str(value)
    return RunConfig.load(args.config, overrides)


def _prepare(args, cfg: RunConfig) -> str:
    out = args.out
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create output directory {out}: {exc}") from exc
    cfg.write(os.path.join(out, "config.ini"))
    return out


def cmd_simulate(args, cfg):
    out = _prepare(args, cfg)
    sim = cfg.sim
    sim.check_stability()
    t0 = time.perf_counter()
    schedule = build_zigzag_schedule(cfg.grid, cfg.laser)
    history = run(sim, schedule, tail_steps=cfg.tail_steps)
    path = os.path.join(out, "history.csv")
    save_history(history, path)
    rows = schedule_row_count(history.schedule())
    print(f"wrote {path}: {rows} rows, {history.n_timesteps} timesteps, "
          f"{time.perf_counter() - t0:.2f} s")


def cmd_dataset(args, cfg):
    out = _prepare(args, cfg)
    history = load_history(args.history)
    ds = build_dataset(history, provenance=os.path.basename(args.history))
    fmt = cfg.get("run.format")
    path = os.path.join(out, "dataset.csv" if fmt == "text" else "dataset.bin")
    save_dataset(ds, path, fmt=fmt)
    print(f"wrote {path}: {len(ds)} rows")


def cmd_train(args, cfg):
    out = _prepare(args, cfg)
    ds = load_dataset(args.dataset)
    if args.until is not None:
        ds = ds.until(args.until)
    t0 = time.perf_counter()
    forest = fit(ds, cfg.train)
    path = os.path.join(out, "model.vxf")
    save_forest(forest, path)
    print(f"wrote {path}: {forest.n_trees} trees, {len(forest.feature)} nodes, "
          f"{len(ds)} rows, {time.perf_counter() - t0:.2f} s")


def cmd_forecast(args, cfg):
    out = _prepare(args, cfg)
    history = load_history(args.history)
    schedule = history.schedule()
    fc = cfg.forecast
    result = forecast(history, schedule, fc)
    result = result.with_truth(truth_for(result, history)) if fc.last_step <= history.final_step else result
    path = os.path.join(out, "predictions.csv")
    save_result(result, path)
    with open(os.path.join(out, "stages.tsv"), "w") as fh:
        fh.write(format_stage_report(result))
    print(f"wrote {path}: {len(result)} predictions in {len(result.stages)} stage(s), "
          f"train {result.train_seconds:.2f} s, predict {result.predict_seconds:.2f} s")
    if result.truth is not None:
        report = evaluate(result, history)
        with open(os.path.join(out, "report.txt"), "w") as fh:
            fh.write(report.to_text())
        with open(os.path.join(out, "summary.tsv"), "w") as fh:
            fh.write(report.summary_table())
        print(f"r2 = {report.r2:.4f}  mape_percent = {report.mape_percent:.4f}")


def cmd_evaluate(args, cfg):
    result = load_result(args.predictions)
    history = load_history(args.history)
    ds = load_dataset(args.dataset) if args.dataset else None
    report = evaluate(result, history, ds)
    sys.stdout.write(report.to_text())
    sys.stdout.write(report.summary_table())
    if args.scatter:
        n = export_scatter(result, history, args.scatter)
        print(f"wrote {args.scatter}: {n} pairs")


def cmd_bench(args, cfg):
    if args.protocol not in experiments.PROTOCOLS:
        raise ConfigError(f"unknown protocol {args.protocol!r}; valid: {', '.join(experiments.PROTOCOLS)}")
    out = _prepare(args, cfg)
    table = experiments.run_protocol(args.protocol, seed=cfg.seed)
    path = os.path.join(out, f"{args.protocol}.tsv")
    try:
        with open(path, "w") as fh:
            fh.write(table.to_tsv())
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc
    sys.stdout.write(table.to_tsv())


def cmd_importance_export(args, cfg):
    forest = load_forest(args.model)
    try:
        with open(args.out, "w") as fh:
            fh.write("feature,importance\n")
            for name, value in feature_importances(forest):
                fh.write(f"{name},{value:.17g}\n")
    except OSError as exc:
        raise FormatError(f"cannot write {args.out}: {exc}") from exc
    print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voxtherm", description="Voxel thermal-history forecasting toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run the finite-difference build simulation")
    _common(p)
    _out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dataset", help="convert a history file into a feature dataset")
    p.add_argument("history")
    _common(p)
    _out(p)
    p.add_argument("--format", choices=("text", "binary"))
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="fit an extremely randomized trees model")
    p.add_argument("dataset")
    _common(p)
    _out(p)
    p.add_argument("--until", type=int, help="only use rows with timestep <= UNTIL")
    p.add_argument("--n-trees", dest="n_trees")
    p.add_argument("--k", dest="k")
    p.add_argument("--min-samples-leaf", dest="min_samples_leaf")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="iterative or direct forecast from a history file")
    p.add_argument("history")
    _common(p)
    _out(p)
    p.add_argument("--mode", choices=("iterative", "direct"))
    p.add_argument("-m", dest="m", help="train horizon (timesteps of truth)")
    p.add_argument("-H", dest="H", help="predict horizon (timesteps)")
    p.add_argument("--delta", help="stage interval (timesteps)")
    p.add_argument("--n-trees", dest="n_trees")
    p.add_argument("--k", dest="k")
    p.add_argument("--min-samples-leaf", dest="min_samples_leaf")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="score a predictions file against a history")
    p.add_argument("predictions")
    p.add_argument("history")
    _common(p)
    p.add_argument("--dataset", help="dataset supplying category labels")
    p.add_argument("--scatter", help="write truth/prediction pairs here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="run a canned experiment protocol")
    p.add_argument("protocol", help=", ".join(experiments.PROTOCOLS))
    _common(p)
    _out(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("importance-export", help="write a model's feature importances")
    p.add_argument("model")
    _common(p)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_importance_export)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _resolve(args)
        args.func(args, cfg)
    except VoxthermError as exc:
        print(f"voxtherm: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"voxtherm: error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
