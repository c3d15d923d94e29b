from importlib import resources

import numpy as np
import pytest

from sisabc.abc import Problem
from sisabc.model import ParamSet, State
from sisabc.network import load_network, read_network, read_series

THETA_STAR = ParamSet(0.25, 0.30, 0.06, 0.04, 0.007, 0.006)
HOLDOUT = 7


def data_path(name):
    return resources.files("sisabc") / "data" / name


@pytest.fixture(scope="session")
def fixture_net():
    return read_network(data_path("fixture_edges.csv"), data_path("fixture_nodes.csv"),
                        data_path("fixture_footprints.csv"))


@pytest.fixture(scope="session")
def full_series():
    return read_series(data_path("synthetic_snapshots.csv"))


@pytest.fixture(scope="session")
def training(full_series):
    return full_series.split(HOLDOUT)[0]


@pytest.fixture(scope="session")
def problem(fixture_net, training):
    return Problem.from_series(fixture_net, training)


@pytest.fixture
def path3():
    """0 - 1 - 2"""
    return load_network([(0, 1), (1, 2)], 3)


def all_infected(n):
    return State(np.ones(n, dtype=bool))


# acceptance verdicts, echoed in the terminal summary so they survive output capture
CRITERIA = []


def record_criterion(number, name, ok, detail):
    line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}: {name} ({detail})"
    CRITERIA.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)
