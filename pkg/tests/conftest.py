import numpy as np
import pytest

from lsdd.array_model import DoaGrid, glasses_geometry

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def geometry():
    return glasses_geometry()


@pytest.fixture(scope="session")
def grid():
    return DoaGrid.uniform(6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
