import numpy as np
import pytest

from covert_sensing.qmat import random_density, random_pure_state, projector


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def full_rank_density(dim, rng, floor=0.05):
    """Random density operator with spectrum bounded away from zero."""
    rho = random_density(dim, rng)
    return (1 - floor) * rho + floor * np.eye(dim) / dim


def pure(dim, rng):
    return projector(random_pure_state(dim, rng))


def bloch(x, y, z):
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])
