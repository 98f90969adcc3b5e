import configparser

import pytest

from voxtherm.config import SCHEMA, RunConfig
from voxtherm.errors import ConfigError, FormatError
from voxtherm.forecast import ForecastMode


def test_defaults_match_schema():
    cfg = RunConfig.default()
    for section, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            assert cfg.get(f"{section}.{key}") == default
    assert cfg.grid.shape == (20, 20, 4)
    assert cfg.train.k_candidate_features is None
    assert cfg.forecast.mode is ForecastMode.ITERATIVE


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[grid]\nnx = 8\n[train]\nn_trees = 3\nk_candidate_features = 7\n")
    cfg = RunConfig.load(path, {"grid.nx": "9", "run.seed": "42"})
    assert cfg.grid.nx == 9
    assert cfg.train.n_trees == 3 and cfg.train.k_candidate_features == 7
    assert cfg.train.seed == 42


def test_resolved_ini_roundtrips(tmp_path):
    cfg = RunConfig.load(overrides={"simulation.dt": "0.05", "train.max_depth": "12", "laser.turnaround_steps": "0"})
    cfg.write(tmp_path / "config.ini")
    again = RunConfig.load(tmp_path / "config.ini")
    assert again == cfg
    # every key is written out
    parser = configparser.ConfigParser()
    parser.read(tmp_path / "config.ini")
    assert {s: set(parser[s]) for s in parser.sections()} == {s: set(k) for s, k in SCHEMA.items()}


@pytest.mark.parametrize("override", [
    {"nosuch.key": "1"},
    {"grid.nosuch": "1"},
    {"grid.nx": "ten"},
    {"simulation.convection": "maybe"},
    {"forecast.mode": "sideways"},
])
def test_bad_values_rejected(override):
    with pytest.raises(ConfigError):
        RunConfig.load(overrides=override)


def test_bad_files(tmp_path):
    with pytest.raises(FormatError):
        RunConfig.load(tmp_path / "missing.ini")
    (tmp_path / "junk.ini").write_text("no section header\n")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "junk.ini")
    (tmp_path / "unknown.ini").write_text("[grid]\nsize = 3\n")
    with pytest.raises(ConfigError, match="unknown key"):
        RunConfig.load(tmp_path / "unknown.ini")


def test_invalid_typed_views():
    with pytest.raises(ConfigError):
        RunConfig.load(overrides={"train.n_trees": "0"}).train
    with pytest.raises(ConfigError):
        RunConfig.load(overrides={"forecast.stage_interval": "500"}).forecast
