from __future__ import annotations

import numpy as np
import pytest

from lsqdebias import dgp


@pytest.fixture(scope="session")
def table():
    return dgp.realize(dgp.table_3x2_dgp())


@pytest.fixture(scope="session")
def exact():
    return dgp.realize(dgp.exact_solution_dgp())


@pytest.fixture(scope="session")
def no_solution():
    return dgp.realize(dgp.no_solution_dgp(0.5))


@pytest.fixture(scope="session")
def weak_id():
    return dgp.realize(dgp.weak_identification_dgp(0.5))


@pytest.fixture(scope="session")
def identity():
    return dgp.realize(dgp.identity_dgp())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
