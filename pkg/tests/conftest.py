import numpy as np
import pytest

from voxtherm.core import GridSpec, LaserParams, build_zigzag_schedule
from voxtherm.features import build_dataset
from voxtherm.simulator import SimConfig, run


@pytest.fixture(scope="session")
def small_build():
    """6x6x2 build: 46 deposition steps, fast enough for exhaustive checks."""
    grid = GridSpec(6, 6, 2)
    laser = LaserParams()
    schedule = build_zigzag_schedule(grid, laser)
    history = run(SimConfig(grid, laser=laser), schedule, tail_steps=4)
    return history, history.schedule()


@pytest.fixture(scope="session")
def small_dataset(small_build):
    history, schedule = small_build
    return build_dataset(history, schedule, provenance="small")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """record(n, passed, detail): one summary line per acceptance criterion."""
    def record(n, passed, detail):
        _CRITERIA[n] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        passed, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
