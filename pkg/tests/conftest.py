import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_spd(rng, n, jitter=0.5):
    """Well-conditioned SPD test matrix with O(1) entries."""
    a = rng.standard_normal((n, n))
    return a @ a.T / n + jitter * np.eye(n)


def random_correlation(rng, n, jitter=0.5):
    """SPD matrix normalised to a unit diagonal."""
    m = random_spd(rng, n, jitter)
    d = 1.0 / np.sqrt(np.diagonal(m))
    return m * np.outer(d, d)


def random_dense_contraction(rng, n1, n2, sigma=0.9):
    a = rng.standard_normal((n1, n2))
    return sigma * a / np.linalg.svd(a, compute_uv=False)[0]


@pytest.fixture
def spd_factory():
    return random_spd


@pytest.fixture
def contraction_factory():
    return random_dense_contraction
