import numpy as np
import pytest

from vhardy.grid import GridSpec


@pytest.fixture
def g1():
    return GridSpec(1, 16.0, 512)


@pytest.fixture
def g2():
    return GridSpec(2, 8.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
