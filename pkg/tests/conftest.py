import math

import numpy as np
import pytest
from hypothesis import settings

from dmgpe.core import make_grid

settings.register_profile("dmgpe", deadline=None, max_examples=40)
settings.load_profile("dmgpe")


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(64, 64, 0.25, 0.25)


@pytest.fixture(scope="session")
def ring_grid():
    # smallest grid that holds a radius-10 ring with the channel resolved
    return make_grid(256, 256, 0.1, 0.1)


@pytest.fixture(scope="session")
def coarse_ring_grid():
    return make_grid(128, 128, 0.2, 0.2)


def gaussian(grid, cx=0.0, cy=0.0, s=1.0):
    X, Y = grid.mesh()
    return np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * s * s)) / (math.sqrt(math.pi) * s)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
