import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rcavoid import solve
from rcavoid.scenario import bundled_path, load_scenario

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_SOLVED = {}

# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


def solved(name):
    """Scenario, trajectory, report and wall time of a bundled solve, cached per session."""
    if name not in _SOLVED:
        sc = load_scenario(bundled_path(name))
        start = time.perf_counter()
        traj, report = solve(sc)
        _SOLVED[name] = (sc, traj, report, time.perf_counter() - start)
    return _SOLVED[name]


@pytest.fixture(scope="session")
def r2_solution():
    return solved("r2_two_agents")


@pytest.fixture(scope="session")
def s2_solution():
    return solved("s2_two_agents")


@pytest.fixture(scope="session")
def so3_solution():
    return solved("so3_two_agents")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
