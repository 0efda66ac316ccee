import numpy as np
import pytest

from gradphi.potential import make_potential


@pytest.fixture(scope="session")
def gaussian():
    return make_potential("gaussian")


@pytest.fixture(scope="session")
def sos():
    return make_potential("sos")


@pytest.fixture(scope="session")
def power15():
    return make_potential("power:1.5")


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
