import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240515)


def random_simplex(rng, k, n=None):
    """Uniform Dirichlet(1) draws on the (k-1)-simplex."""
    if n is None:
        return rng.dirichlet(np.ones(k))
    return rng.dirichlet(np.ones(k), size=n)
