import numpy as np
import pytest

from ptmanakov.fields import Params, gaussian_state, uniform_grid


@pytest.fixture(scope="session")
def fine_grid():
    return uniform_grid(1, 16.0, 4097)


@pytest.fixture(scope="session")
def row1_state():
    return gaussian_state(uniform_grid(1, 30.0, 2049), 3.0, 1.0, 1.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pt_params():
    return Params(kappa=1.0, gamma=0.5)


# acceptance verdicts, one line per criterion, echoed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
