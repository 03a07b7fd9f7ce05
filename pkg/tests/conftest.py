import time

import numpy as np
import pytest

from nmdtsa.boundary import SearchConfig, search_boundary_sim
from nmdtsa.cases import ninebus_initial_angles, ninebus_system, smib_system
from nmdtsa.tsa import prepare

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def smib():
    return prepare(smib_system(), np.array([0.0, -0.26]))


@pytest.fixture(scope="session")
def smib_osc(smib):
    return smib.oscillators[0]


@pytest.fixture(scope="session")
def smib_sim_boundary(smib_osc):
    t0 = time.perf_counter()
    est = search_boundary_sim(smib_osc, SearchConfig())
    est.meta["elapsed_s"] = time.perf_counter() - t0
    return est


@pytest.fixture(scope="session")
def ninebus_post():
    return ninebus_system(tripped=[(5, 7)])


@pytest.fixture(scope="session")
def ninebus(ninebus_post):
    return prepare(ninebus_post, ninebus_initial_angles())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
