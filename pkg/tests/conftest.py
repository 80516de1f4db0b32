import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from corridorplan.world import ForestSpec, generate_forest

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def dense_forest():
    """High-density forest (1/25) with its tree centers."""
    return generate_forest(ForestSpec(density=1 / 25, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
