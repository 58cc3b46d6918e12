import numpy as np
import pytest

from aoisched import config as cfg_mod
from aoisched import reference
from aoisched.validation import SMALL_INSTANCE


@pytest.fixture(scope="session")
def default_scenario():
    return cfg_mod.build_scenario(cfg_mod.resolve_config({}))


@pytest.fixture(scope="session")
def default_tables(default_scenario):
    return reference.build_tables(default_scenario)


@pytest.fixture(scope="session")
def small_scenario():
    return cfg_mod.build_scenario(cfg_mod.resolve_config(SMALL_INSTANCE))


@pytest.fixture(scope="session")
def small_tables(small_scenario):
    return reference.build_tables(small_scenario)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
