import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from iecsi.channel import SCENARIOS, generate_dataset
from iecsi.tensor import default_dtype

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def f64():
    """Run the test body with float64 tensors (gradient-check mode)."""
    with default_dtype(np.float64):
        yield


@pytest.fixture(scope="session")
def toy_scenario():
    return SCENARIOS["indoor-like"].scaled(n_tx=8, n_subcarriers=64)


@pytest.fixture(scope="session")
def toy_channels(toy_scenario):
    return generate_dataset(toy_scenario, 6, seed=11)
