"""INI run configuration shared by every CLI subcommand.

Every key has a typed default (see ``SCHEMA``); unknown sections or keys are
rejected. ``RunConfig.to_ini()`` writes the fully resolved configuration,
which the CLI drops into each output directory.

Example::

    [grid]
    nx = 20
    [train]
    n_trees = 10
    k_candidate_features = all
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .core import GridSpec, LaserParams, MaterialProps
from .ert import TrainConfig
from .errors import ConfigError, FormatError
from .forecast import ForecastConfig, ForecastMode
from .simulator import SimConfig


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_int(none_word):
    def parse(text):
        return None if text.strip().lower() == none_word else int(text)
    parse.none_word = none_word
    return parse


def _choice(*options):
    def parse(text):
        v = text.strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return v
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "grid": {
        "nx": (int, 20),
        "ny": (int, 20),
        "nz": (int, 4),
        "edge_length": (float, 5e-4),
        "substrate_temperature": (float, 300.0),
    },
    "material": {
        "density": (float, 4430.0),
        "specific_heat": (float, 526.0),
        "conductivity": (float, 6.7),
        "convective_coefficient": (float, 50.0),
        "ambient_temperature": (float, 300.0),
    },
    "laser": {
        "deposition_temperature": (float, 1900.0),
        "voxels_per_step_lateral": (int, 2),
        "turnaround_steps": (int, 1),
        "power_label": (float, 400.0),
        "scan_speed_label": (float, 0.01),
    },
    "simulation": {
        "dt": (float, 0.1),
        "substeps_per_deposition": (int, 10),
        "convection": (_bool, True),
        "substrate_contact": (_bool, True),
        "tail_steps": (int, 0),
    },
    "train": {
        "n_trees": (int, 20),
        "k_candidate_features": (_opt_int("all"), None),
        "min_samples_leaf": (int, 5),
        "max_depth": (_opt_int("none"), None),
        "bootstrap": (_bool, False),
        "splitter": (_choice("random", "best"), "random"),
        "n_jobs": (int, 1),
    },
    "forecast": {
        "train_horizon": (int, 200),
        "predict_horizon": (int, 300),
        "stage_interval": (int, 20),
        "mode": (_choice("iterative", "direct"), "iterative"),
    },
    "run": {
        "seed": (int, 0),
        "output_dir": (str, "voxtherm-out"),
        "format": (_choice("text", "binary"), "text"),
    },
}


def _render(parser, value):
    if value is None:
        return getattr(parser, "none_word", "none")
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    @classmethod
    def default(cls) -> "RunConfig":
        return cls({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def load(cls, path=None, overrides=None) -> "RunConfig":
        """Defaults, then the INI file at ``path``, then ``{"section.key": text}`` overrides."""
        cfg = cls.default()
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except OSError as exc:
                raise FormatError(f"cannot read config {os.fspath(path)}: {exc}") from exc
            except configparser.Error as exc:
                raise ConfigError(f"{os.fspath(path)}: {exc}") from exc
            cfg = cfg.updated({f"{s}.{k}": v for s in parser.sections() for k, v in parser[s].items()},
                              source=os.fspath(path))
        return cfg.updated(overrides or {})

    def updated(self, overrides: dict, source="override") -> "RunConfig":
        values = {s: dict(keys) for s, keys in self.values.items()}
        for dotted, text in overrides.items():
            section, _, key = dotted.partition(".")
            if section not in SCHEMA:
                raise ConfigError(f"{source}: unknown section [{section}]; valid: {', '.join(SCHEMA)}")
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]; "
                                  f"valid: {', '.join(SCHEMA[section])}")
            parse = SCHEMA[section][key][0]
            try:
                values[section][key] = parse(text) if isinstance(text, str) else text
            except ValueError as exc:
                raise ConfigError(f"{source}: [{section}] {key}: {exc}") from exc
        return RunConfig(values)

    def get(self, dotted):
        section, _, key = dotted.partition(".")
        return self.values[section][key]

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for section, keys in SCHEMA.items():
            parser[section] = {k: _render(p, self.values[section][k]) for k, (p, _) in keys.items()}
        lines = []
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in parser[section].items()]
            lines.append("")
        return "\n".join(lines)

    def write(self, path) -> None:
        try:
            with open(path, "w") as fh:
                fh.write(self.to_ini())
        except OSError as exc:
            raise FormatError(f"cannot write config {os.fspath(path)}: {exc}") from exc

    # typed views -----------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def grid(self) -> GridSpec:
        return GridSpec(**self.values["grid"])

    @property
    def material(self) -> MaterialProps:
        return MaterialProps(**self.values["material"])

    @property
    def laser(self) -> LaserParams:
        return LaserParams(**self.values["laser"])

    @property
    def tail_steps(self) -> int:
        return self.values["simulation"]["tail_steps"]

    @property
    def sim(self) -> SimConfig:
        s = {k: v for k, v in self.values["simulation"].items() if k != "tail_steps"}
        return SimConfig(self.grid, self.material, self.laser, **s)

    @property
    def train(self) -> TrainConfig:
        try:
            return TrainConfig(seed=self.seed, **self.values["train"])
        except ValueError as exc:
            raise ConfigError(f"[train] {exc}") from exc

    @property
    def forecast(self) -> ForecastConfig:
        f = self.values["forecast"]
        try:
            return ForecastConfig(f["train_horizon"], f["predict_horizon"], f["stage_interval"],
                                  self.train, ForecastMode(f["mode"]))
        except ValueError as exc:
            raise ConfigError(f"[forecast] {exc}") from exc
