import numpy as np
import pytest

from gdcavity.config import bundled_config
from gdcavity.dicke import diagonalize_config

RESONANCE_FIELD = 72.0


@pytest.fixture(scope="session")
def base_run():
    return bundled_config()


@pytest.fixture(scope="session")
def base_dicke(base_run):
    return base_run.dicke()


@pytest.fixture(scope="session")
def resonance_eigen(base_dicke):
    return diagonalize_config(base_dicke)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
