import numpy as np
import pytest

from satvct.core import GridSpec, make_fan_geometry, make_parallel_geometry


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(16)


@pytest.fixture(scope="session")
def par16(grid16):
    return make_parallel_geometry(10, 23, grid16)


@pytest.fixture(scope="session")
def fan16(grid16):
    return make_fan_geometry(12, 31, grid16)
