import numpy as np
import pytest

from sphere_ot.cloud import PointCloud


@pytest.fixture(scope="session")
def ico162():
    return PointCloud.generate("icosahedral", 162)


@pytest.fixture(scope="session")
def ico642():
    return PointCloud.generate("icosahedral", 642)


@pytest.fixture(scope="session")
def fib500():
    return PointCloud.generate("fibonacci", 500)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
