import math

import pytest

from polaronscatter.model import CutoffKind, DispersionKind, build_mode_grid, uniform_grid
from polaronscatter.polaron import solve_polaron


@pytest.fixture(scope="session")
def grid16():
    """N=16 linear grid, L=16 pi, hard cutoff at 4, alpha=0.1."""
    return build_mode_grid(16, 16 * math.pi, DispersionKind("linear"), CutoffKind("hard", 4.0), 0.1)


@pytest.fixture(scope="session")
def grid128():
    return uniform_grid(128, 4.0, 0.12)


@pytest.fixture(scope="session")
def params128(grid128):
    return solve_polaron(grid128)


@pytest.fixture(scope="session")
def grid64():
    return uniform_grid(64, 4.0, 0.1)


@pytest.fixture(scope="session")
def params64(grid64):
    return solve_polaron(grid64)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
