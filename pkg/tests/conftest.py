import warnings

import numpy as np
import pytest

from hypimm.codazzi import qd_basis
from hypimm.surface import surface


def _quiet(fn, *args):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fn(*args)


@pytest.fixture(scope="session")
def mesh2():
    return _quiet(surface, 2, 2)


@pytest.fixture(scope="session")
def mesh3():
    return _quiet(surface, 2, 3)


@pytest.fixture(scope="session")
def mesh4():
    return _quiet(surface, 2, 4)


@pytest.fixture(scope="session")
def qd3(mesh3):
    return _quiet(qd_basis, mesh3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
