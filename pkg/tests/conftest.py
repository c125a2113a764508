import numpy as np
import pytest

from spde_moments import (
    AffineNoiseMap,
    NoiseModel,
    SpectralModel,
    dirichlet_laplacian,
    scaled_random_coupling,
)


@pytest.fixture
def scalar_model():
    return SpectralModel(eigenvalues=[1.0], horizon=1.0)


@pytest.fixture
def unit_noise():
    return NoiseModel(q_eigenvalues=[1.0])


@pytest.fixture
def additive_map():
    # g1 = 0, g2 = 1: purely additive scalar noise
    return AffineNoiseMap(g1=np.zeros((1, 1, 1)), g2=np.ones((1, 1)))


@pytest.fixture
def multiplicative_map():
    # G(x) w = (0.5 x + 0.5) w
    return AffineNoiseMap(g1=np.full((1, 1, 1), 0.5), g2=np.full((1, 1), 0.5))


def multimode_setup():
    """Shared four-mode configuration with non-diagonal coupling."""
    model = dirichlet_laplacian(4, np.pi, horizon=1.0)
    noise = NoiseModel(
        q_eigenvalues=2.0 ** -np.arange(1, 5), wiener_fraction=0.5, jump_rate=4.0
    )
    g1 = scaled_random_coupling(model, noise, 0.5, seed=12345)
    gmap = AffineNoiseMap(g1=g1, g2=0.5 * np.eye(4))
    x0 = 1.0 / np.arange(1, 5)
    return model, noise, gmap, x0
