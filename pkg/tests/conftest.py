import numpy as np
import pytest

from capax.geometry import make_ellipsoid, make_sphere


@pytest.fixture(scope="session")
def unit_sphere():
    return make_sphere(1.0, 12)


@pytest.fixture(scope="session")
def ellipsoid():
    return make_ellipsoid(2.0, 1.0, 1.0, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
