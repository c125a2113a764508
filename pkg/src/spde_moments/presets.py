"""Construction helpers for experiment configurations."""

from __future__ import annotations

import numpy as np

from .levy import NoiseModel
from .montecarlo import AffineNoiseMap, g1_v_to_hs_norm
from .spectral import SpectralModel

__all__ = ["scalar_noise_map", "diagonal_noise_map", "scaled_random_coupling"]


def scalar_noise_map(g1_value: float, g2_value: float) -> AffineNoiseMap:
    """One state mode, one noise mode: G(x) w = (g1 x + g2) w."""
    return AffineNoiseMap(
        g1=np.full((1, 1, 1), float(g1_value)), g2=np.full((1, 1), float(g2_value))
    )


def diagonal_noise_map(g1_values: np.ndarray, g2_values: np.ndarray) -> AffineNoiseMap:
    """Mode-diagonal map: noise mode m drives state mode m only."""
    a = np.atleast_1d(np.asarray(g1_values, dtype=float))
    b = np.atleast_1d(np.asarray(g2_values, dtype=float))
    if a.shape != b.shape:
        raise ValueError("g1 and g2 diagonals must have equal length")
    n = a.size
    g1 = np.zeros((n, n, n))
    idx = np.arange(n)
    g1[idx, idx, idx] = a
    return AffineNoiseMap(g1=g1, g2=np.diag(b))


def scaled_random_coupling(
    model: SpectralModel,
    noise: NoiseModel,
    target_norm: float,
    seed: int,
) -> np.ndarray:
    """Dense non-diagonal multiplicative coefficients with a prescribed norm.

    Draws a standard normal (N, N, M) array from the given seed and
    rescales it so the energy-to-Hilbert-Schmidt operator norm equals
    target_norm. Deterministic in the seed.
    """
    if target_norm < 0.0:
        raise ValueError("target norm must be nonnegative")
    rng = np.random.default_rng(seed)
    g1 = rng.standard_normal((model.dim, model.dim, noise.dim))
    probe = AffineNoiseMap(g1=g1, g2=np.zeros((model.dim, noise.dim)))
    current = g1_v_to_hs_norm(probe, model, noise)
    if current == 0.0:
        raise ValueError("drawn coupling has zero norm; cannot rescale")
    return g1 * (target_norm / current)
