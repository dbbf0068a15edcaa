import numpy as np
import pytest

from src.manifolds.sphere import RoundSphere
from src.manifolds.torus import ConformalTorus, FlatTorus


@pytest.fixture
def flat_torus():
    return FlatTorus(period=8.0, n=2, prefer_oracles=True)


@pytest.fixture
def integrated_flat_torus():
    return FlatTorus(period=8.0, n=2, prefer_oracles=False)


@pytest.fixture
def small_torus():
    return FlatTorus(period=4.0, n=2, prefer_oracles=True)


@pytest.fixture
def conformal_torus():
    return ConformalTorus(period=8.0, n=2, eta=0.05, perturbation_seed=3, modes=3)


@pytest.fixture
def sphere():
    return RoundSphere(radius=4.0, n=2, prefer_oracles=False)


@pytest.fixture
def sphere_oracle():
    return RoundSphere(radius=4.0, n=2, prefer_oracles=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
