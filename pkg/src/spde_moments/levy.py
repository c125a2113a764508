"""Square-integrable zero-mean Levy driver with prescribed covariance.

The driver lives on a truncated noise space of M modes and decomposes
into a Wiener part and a compensated compound Poisson part. Each
covariance eigenvalue gamma_m is split between the two parts by the
wiener_fraction rho, so that the total increment covariance over a step
of length dt is exactly dt * diag(gamma) for every (rho, jump_rate).

Jumps have symmetric two-point distributed sizes, so they are mean zero
and no compensator drift is needed. The jump mode is drawn proportional
to gamma_m, and the common squared jump size (1 - rho) * tr(Q) / nu
makes the jump part carry its covariance share exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensors import Tensor2

__all__ = [
    "NoiseModel",
    "covariance_kernel",
    "sample_increment",
    "sample_increments",
    "q_sqrt_apply",
    "hs_norm_on_cameron_martin",
]


@dataclass(frozen=True)
class NoiseModel:
    """Covariance eigenvalues plus the Wiener / jump decomposition.

    q_eigenvalues: nonnegative eigenvalues gamma_m of the covariance
        operator in its eigenbasis (zero entries are inactive modes).
    wiener_fraction: share rho in [0, 1] of each gamma_m carried by the
        Wiener part.
    jump_rate: expected jumps per unit time; must be positive whenever
        rho < 1 so the jump part can carry its covariance share.
    seed: base seed of the model's random streams, see make_rng.
    """

    q_eigenvalues: np.ndarray
    wiener_fraction: float = 1.0
    jump_rate: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        gamma = np.atleast_1d(np.asarray(self.q_eigenvalues, dtype=float))
        if gamma.ndim != 1 or gamma.size == 0:
            raise ValueError("q_eigenvalues must form a nonempty 1-d sequence")
        if not np.all(np.isfinite(gamma)) or np.any(gamma < 0.0):
            raise ValueError("q_eigenvalues must be finite and nonnegative")
        rho = float(self.wiener_fraction)
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"wiener_fraction must lie in [0, 1], got {rho}")
        nu = float(self.jump_rate)
        if not (np.isfinite(nu) and nu >= 0.0):
            raise ValueError(f"jump_rate must be nonnegative, got {nu}")
        if rho < 1.0 and nu <= 0.0:
            raise ValueError("jump_rate must be positive when wiener_fraction < 1")
        gamma.setflags(write=False)
        object.__setattr__(self, "q_eigenvalues", gamma)
        object.__setattr__(self, "wiener_fraction", rho)
        object.__setattr__(self, "jump_rate", nu)

    @property
    def dim(self) -> int:
        return int(self.q_eigenvalues.size)

    @property
    def trace(self) -> float:
        return float(np.sum(self.q_eigenvalues))

    def make_rng(self, stream: int = 0) -> np.random.Generator:
        """Independent generator for a worker stream of this model."""
        if self.seed is None:
            return np.random.default_rng()
        return np.random.default_rng([self.seed, stream])


def covariance_kernel(noise: NoiseModel) -> Tensor2:
    """Kernel of the covariance operator: diag(gamma) in the eigenbasis.

    Its projective norm equals the trace of the covariance operator.
    """
    return Tensor2(np.diag(noise.q_eigenvalues))


def sample_increments(
    noise: NoiseModel, dt: float, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw `count` independent increments over a step of length dt.

    Returns a (count, M) array with zero mean and covariance
    dt * diag(gamma) per row.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    gamma = noise.q_eigenvalues
    rho = noise.wiener_fraction
    out = rng.standard_normal((count, noise.dim)) * np.sqrt(dt * rho * gamma)
    tr = noise.trace
    if rho < 1.0 and tr > 0.0:
        size = np.sqrt((1.0 - rho) * tr / noise.jump_rate)
        counts = rng.poisson(noise.jump_rate * dt, size=count)
        total = int(counts.sum())
        if total:
            rows = np.repeat(np.arange(count), counts)
            modes = rng.choice(noise.dim, size=total, p=gamma / tr)
            signs = rng.integers(0, 2, size=total) * 2 - 1
            np.add.at(out, (rows, modes), size * signs)
    return out


def sample_increment(noise: NoiseModel, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Single increment over a step of length dt, as a length-M array."""
    return sample_increments(noise, dt, 1, rng)[0]


def q_sqrt_apply(noise: NoiseModel, x: np.ndarray) -> np.ndarray:
    """Multiply componentwise by sqrt(gamma), the square root of the covariance."""
    x = np.asarray(x, dtype=float)
    if x.shape != (noise.dim,):
        raise ValueError(f"argument has shape {x.shape}, expected ({noise.dim},)")
    return np.sqrt(noise.q_eigenvalues) * x


def hs_norm_on_cameron_martin(noise: NoiseModel, B: np.ndarray) -> float:
    """Hilbert-Schmidt norm of the matrix B restricted to the noise range.

    The range of the covariance square root has the orthonormal basis
    sqrt(gamma_m) e_m, so the squared norm is sum_m gamma_m |B e_m|^2.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[1] != noise.dim:
        raise ValueError(f"matrix has {B.shape[1]} columns, expected {noise.dim}")
    if not np.all(np.isfinite(B)):
        raise ValueError("matrix entries must be finite")
    return float(np.sqrt(np.sum(noise.q_eigenvalues * np.sum(B ** 2, axis=0))))
