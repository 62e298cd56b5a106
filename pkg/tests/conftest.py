import numpy as np
import pytest

from flocktrack.front_tracker import init_from_cells
from flocktrack.wave_algebra import ModelParams


def place(s, positions, speeds=None):
    """Move the fronts of ``s`` to ``positions`` at the current time."""
    s.spd = s.spd if speeds is None else np.asarray(speeds, dtype=float)
    s.icpt = np.asarray(positions, dtype=float) - s.spd * s.time
    return s


@pytest.fixture
def unit_params():
    return ModelParams(alpha=1.0, M=1.0)


@pytest.fixture
def cells():
    def make(u, v, params=None, eta=0.5, dt=0.1, quantum=0.0):
        return init_from_cells(u, v, params or ModelParams(1.0, 1.0), eta, dt, quantum)
    return make


# acceptance lines collected by tests/test_acceptance.py, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
