import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kahlerlab.core import GridChart

settings.register_profile(
    "kahlerlab",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("kahlerlab")


@pytest.fixture(scope="session")
def torus1():
    return GridChart.torus(1, 32)


@pytest.fixture(scope="session")
def torus2():
    return GridChart.torus(2, 16)


@pytest.fixture(scope="session")
def annulus():
    return GridChart.annulus((128, 32), 1e-4, 0.5)


@pytest.fixture(scope="session")
def product_small():
    return GridChart.product(2, (96, 16, 9, 9), 1e-5, 0.3, fiber_extent=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
