import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)


def batch_se(chain, n_batches=100):
    """Batch-means standard error of the mean for a stationary chain."""
    chain = np.asarray(chain, dtype=float)
    size = chain.shape[0] // n_batches
    means = chain[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))
