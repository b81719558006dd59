import numpy as np
import pytest

from dupirelab import pathspace as ps


@pytest.fixture
def grid():
    return ps.TimeGrid(1.0, 9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def brownian(grid, rng, scale=1.0):
    inc = rng.standard_normal(grid.node_count - 1) * np.sqrt(grid.dt) * scale
    return ps.CadlagPath(grid, np.concatenate(([0.0], np.cumsum(inc))))
