import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from voxtherm.baselines import BaselineModel
from voxtherm.core import ThermalHistory
from voxtherm.ert import TrainConfig, fit
from voxtherm.errors import ContractError, FormatError, StageError
from voxtherm.features import SENTINEL, build_dataset
from voxtherm.forecast import (
    ForecastConfig,
    ForecastMode,
    direct_forecast,
    forecast,
    iterative_forecast,
    load_result,
    save_result,
    stage_report,
)

M, H, D = 20, 24, 5
LEARNER = TrainConfig(n_trees=3, seed=4)


def spliced(history, result):
    """Copy of ``history`` whose frames after m hold the forecast instead of truth."""
    T = np.array(history.temperatures)
    T[result.timestep, result.voxel[:, 0], result.voxel[:, 1], result.voxel[:, 2]] = result.predicted
    return replace(history, temperatures=T, creation_step=np.array(history.creation_step),
                   laser_path=np.array(history.laser_path))


@pytest.fixture(scope="module")
def iterative(small_build):
    history, schedule = small_build
    return iterative_forecast(history, schedule, ForecastConfig(M, H, D, LEARNER))


@given(st.integers(1, 500), st.integers(1, 500))
def test_stage_count(h, d):
    if d > h:
        with pytest.raises(ContractError):
            ForecastConfig(10, h, d)
        return
    cfg = ForecastConfig(10, h, d)
    assert cfg.n_stages == math.ceil(h / d)
    assert replace(cfg, mode=ForecastMode.DIRECT).n_stages == 1
    assert cfg.last_step == 10 + h


def test_covers_every_active_voxel_once(small_build, iterative):
    history, schedule = small_build
    expect = sum(int(np.count_nonzero(schedule.creation_step <= t)) for t in range(M + 1, M + H + 1))
    assert len(iterative) == expect
    keys = set(zip(iterative.timestep.tolist(), map(tuple, iterative.voxel.tolist())))
    assert len(keys) == expect
    assert iterative.timestep.min() == M + 1 and iterative.timestep.max() == M + H
    assert np.all(np.diff(iterative.timestep) >= 0)


def test_stage_windows_and_rows(small_build, iterative):
    _, schedule = small_build
    assert [(r.first_step, r.last_step) for r in iterative.stages] == [
        (21, 25), (26, 30), (31, 35), (36, 40), (41, 44)]
    active = [int(np.count_nonzero(schedule.creation_step <= t)) for t in range(M + H + 1)]
    for r in iterative.stages:
        assert r.rows_predicted == sum(active[r.first_step:r.last_step + 1])
        assert r.train_rows == sum(active[:r.first_step])
        assert np.all(iterative.stage[(iterative.timestep >= r.first_step) & (iterative.timestep <= r.last_step)]
                      == r.stage)
        assert iterative.stage_of(r.first_step) == r.stage
    report = stage_report(iterative)
    assert report[-1]["rows_predicted"] == len(iterative)
    with pytest.raises(ContractError):
        iterative.stage_of(M)


def test_iterative_matches_spliced_oracle(small_build, iterative):
    """Each stage equals a fresh fit on the truth-plus-prediction record."""
    history, _ = small_build
    ds = build_dataset(spliced(history, iterative))
    for r in iterative.stages:
        model = fit(ds.until(r.first_step - 1), LEARNER)
        rows = (ds.timestep >= r.first_step) & (ds.timestep <= r.last_step)
        mine = (iterative.timestep >= r.first_step) & (iterative.timestep <= r.last_step)
        assert np.array_equal(ds.voxel[rows], iterative.voxel[mine])
        assert np.array_equal(model.predict(ds.X[rows]), iterative.predicted[mine])


def test_direct_uses_sentinels_beyond_m(small_build):
    history, schedule = small_build
    res = direct_forecast(history, schedule, ForecastConfig(M, H, D, LEARNER, ForecastMode.DIRECT))
    model = fit(build_dataset(history).until(M), LEARNER)
    # oracle: truth record cut at m, everything later unknown
    T = np.array(history.temperatures)
    T[M + 1:] = np.nan
    cut = ThermalHistory(history.grid, history.dt, history.creation_step, T, history.laser_path,
                         history.material, history.laser)
    X = []
    from voxtherm.features import pad_record, step_features, RunLabels

    pad = pad_record(cut.temperatures)
    for t in range(M + 1, M + H + 1):
        vox = schedule.active_voxels(t)
        X.append(step_features(pad, t, vox, schedule.creation_step[tuple(vox.T)], schedule.laser_path[t],
                               RunLabels.of(history)))
    X = np.vstack(X)
    assert np.array_equal(res.predicted, model.predict(X))
    late = res.timestep > M + 5
    assert np.all(X[late, :5] == SENTINEL)
    assert len(res.stages) == 1 and res.stages[0].rows_predicted == len(res)


class TracingHistory(ThermalHistory):
    reads: list = []

    def frame(self, t):
        TracingHistory.reads.append(t)
        return super().frame(t)


@pytest.mark.parametrize("mode", list(ForecastMode))
def test_truth_beyond_m_never_read(small_build, mode):
    history, schedule = small_build
    traced = TracingHistory(history.grid, history.dt, history.creation_step, history.temperatures,
                            history.laser_path, history.material, history.laser)
    TracingHistory.reads = []
    cfg = ForecastConfig(M, H, D, LEARNER, mode)
    res = forecast(traced, schedule, cfg)
    assert TracingHistory.reads and max(TracingHistory.reads) <= M
    # scrambling the future changes nothing
    T = np.array(history.temperatures)
    T[M + 1:] = np.where(np.isnan(T[M + 1:]), np.nan, 5000.0)
    other = ThermalHistory(history.grid, history.dt, history.creation_step, T, history.laser_path,
                           history.material, history.laser)
    assert forecast(other, schedule, cfg).identical_to(res)


def test_deterministic(small_build, iterative):
    history, schedule = small_build
    again = iterative_forecast(history, schedule, ForecastConfig(M, H, D, LEARNER))
    assert again.identical_to(iterative)


def test_prefix_of_longer_horizon(small_build, iterative):
    history, schedule = small_build
    short = iterative_forecast(history, schedule, ForecastConfig(M, 15, D, LEARNER))
    assert iterative.until(M + 15).identical_to(short)


def test_single_stage_is_one_model(small_build):
    history, schedule = small_build
    res = iterative_forecast(history, schedule, ForecastConfig(M, D, D, LEARNER))
    assert len(res.stages) == 1
    assert res.stages[0].train_rows == len(build_dataset(history).until(M))


def test_baseline_learners_run(small_build):
    history, schedule = small_build
    for learner in (BaselineModel.ridge(1.0), BaselineModel.single_decision_tree()):
        res = iterative_forecast(history, schedule, ForecastConfig(M, 10, 5, learner))
        assert np.all(np.isfinite(res.predicted))


def test_collinear_ols_reports_stage(small_build):
    history, schedule = small_build
    with pytest.raises(StageError) as info:
        iterative_forecast(history, schedule, ForecastConfig(M, 10, 5, BaselineModel.ordinary_least_squares()))
    # on this small build the stage-2 training matrix (truth plus predictions) is rank deficient
    assert info.value.stage == 2
    assert "Ridge" in str(info.value)
    assert info.value.exit_code == 3


def test_input_errors(small_build):
    history, schedule = small_build
    with pytest.raises(ContractError):
        iterative_forecast(history, schedule, ForecastConfig(M, 500, 20, LEARNER))
    with pytest.raises(ContractError):
        iterative_forecast(history, schedule, ForecastConfig(history.n_timesteps, 5, 5, LEARNER))
    with pytest.raises(ContractError):
        ForecastConfig(0, 5, 5)


def test_result_file_roundtrip(small_build, iterative, tmp_path):
    from voxtherm.metrics import truth_for

    history, _ = small_build
    res = iterative.with_truth(truth_for(iterative, history))
    save_result(res, tmp_path / "p.csv")
    back = load_result(tmp_path / "p.csv")
    assert back.identical_to(res)
    assert np.array_equal(back.truth, res.truth)
    assert [(r.stage, r.first_step, r.last_step, r.rows_predicted) for r in back.stages] == [
        (r.stage, r.first_step, r.last_step, r.rows_predicted) for r in res.stages]
    save_result(iterative, tmp_path / "q.csv")
    assert load_result(tmp_path / "q.csv").truth is None
    (tmp_path / "bad.csv").write_text("hello\n")
    with pytest.raises(FormatError):
        load_result(tmp_path / "bad.csv")
