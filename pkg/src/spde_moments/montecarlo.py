"""Path simulation of the mild solution and statistical moment estimation.

The time stepper is the semigroup (exponential Euler) scheme

    X_{k+1} = S(dt) (X_k + G(X_k) dL_k),

which treats the stiff linear part exactly in spectral coordinates and
evaluates the noise operator at the left endpoint of every step, as the
stochastic integral's predictability requires.

Ensembles are generated in fixed batches of paths. Batch b always draws
from the generator seeded with [seed, b], so results are reproducible
bit for bit regardless of how many worker threads execute the batches,
and the same batches feed the batch-means standard errors.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import svdvals

from .levy import NoiseModel, sample_increments
from .spectral import SpectralModel

__all__ = [
    "AffineNoiseMap",
    "Ensemble",
    "MomentEstimate",
    "g_apply",
    "g1_v_to_hs_norm",
    "simulate_path",
    "simulate_ensemble",
    "estimate_moments",
    "weak_identity_residual",
    "ito_isometry_check",
]


@dataclass(frozen=True)
class AffineNoiseMap:
    """Coefficients of the affine noise operator G(x) = G1(x) + G2.

    g1: (N, N, M) array; (G1(x) w)_i = sum_{j,m} g1[i, j, m] x_j w_m.
    g2: (N, M) matrix;   (G2 w)_i    = sum_m g2[i, m] w_m.
    """

    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self) -> None:
        g1 = np.asarray(self.g1, dtype=float)
        g2 = np.asarray(self.g2, dtype=float)
        if g1.ndim != 3 or g1.shape[0] != g1.shape[1]:
            raise ValueError(f"g1 must have shape (N, N, M), got {g1.shape}")
        if g2.shape != (g1.shape[0], g1.shape[2]):
            raise ValueError(f"g2 must have shape {(g1.shape[0], g1.shape[2])}, got {g2.shape}")
        if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
            raise ValueError("noise map entries must be finite")
        g1.setflags(write=False)
        g2.setflags(write=False)
        object.__setattr__(self, "g1", g1)
        object.__setattr__(self, "g2", g2)

    @property
    def state_dim(self) -> int:
        return self.g1.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.g1.shape[2]


def g_apply(gmap: AffineNoiseMap, state: np.ndarray, increment: np.ndarray) -> np.ndarray:
    """Evaluate G(state) applied to a noise increment.

    Accepts a single state (N,) with increment (M,), or batches with a
    common leading shape.
    """
    state = np.asarray(state, dtype=float)
    increment = np.asarray(increment, dtype=float)
    if state.shape[-1] != gmap.state_dim:
        raise ValueError(f"state dimension {state.shape[-1]} != {gmap.state_dim}")
    if increment.shape[-1] != gmap.noise_dim:
        raise ValueError(f"increment dimension {increment.shape[-1]} != {gmap.noise_dim}")
    mult = np.einsum("ijm,...j,...m->...i", gmap.g1, state, increment)
    return mult + increment @ gmap.g2.T


def g1_v_to_hs_norm(gmap: AffineNoiseMap, model: SpectralModel, noise: NoiseModel) -> float:
    """Operator norm of G1 from the energy space into the noise-weighted
    Hilbert-Schmidt space.

    Equals the spectral norm of the (N*M, N) matrix with entries
    sqrt(gamma_m) g1[i, j, m] / sqrt(lambda_j); the Picard iteration for
    the second moment contracts when this value is below one.
    """
    if gmap.state_dim != model.dim:
        raise ValueError(f"state dimension {gmap.state_dim} != model dimension {model.dim}")
    if gmap.noise_dim != noise.dim:
        raise ValueError(f"noise dimension {gmap.noise_dim} != noise model dimension {noise.dim}")
    weighted = (
        np.sqrt(noise.q_eigenvalues)[None, None, :]
        * gmap.g1
        / np.sqrt(model.eigenvalues)[None, :, None]
    )
    flat = np.transpose(weighted, (0, 2, 1)).reshape(-1, model.dim)
    s = svdvals(flat)
    return float(s[0]) if s.size else 0.0


def _check_compatible(model: SpectralModel, noise: NoiseModel, gmap: AffineNoiseMap) -> None:
    if gmap.state_dim != model.dim:
        raise ValueError(f"noise map state dimension {gmap.state_dim} != model dimension {model.dim}")
    if gmap.noise_dim != noise.dim:
        raise ValueError(f"noise map noise dimension {gmap.noise_dim} != noise dimension {noise.dim}")


def simulate_path(
    model: SpectralModel,
    noise: NoiseModel,
    gmap: AffineNoiseMap,
    x0: np.ndarray,
    K: int,
    rng: np.random.Generator,
    return_increments: bool = False,
):
    """Simulate one path of the mild solution on the uniform K-step grid.

    Returns a (K+1, N) array of mode coefficients, plus the (K, M) noise
    increments when return_increments is set.
    """
    if K < 1:
        raise ValueError(f"step count must be positive, got {K}")
    _check_compatible(model, noise, gmap)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.dim,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"initial value must be a finite length-{model.dim} array")
    dt = model.horizon / K
    decay = np.exp(-model.eigenvalues * dt)
    path = np.empty((K + 1, model.dim))
    increments = np.empty((K, noise.dim))
    path[0] = x0
    x = x0.copy()
    for k in range(K):
        dL = sample_increments(noise, dt, 1, rng)[0]
        increments[k] = dL
        x = decay * (x + g_apply(gmap, x, dL))
        path[k + 1] = x
    if return_increments:
        return path, increments
    return path


@dataclass(frozen=True)
class Ensemble:
    """Simulated paths on a uniform grid, plus the seeding metadata
    needed to reproduce the batch structure."""

    paths: np.ndarray  # (P, K+1, N)
    seed: int
    steps: int
    horizon: float
    batches: int

    def __post_init__(self) -> None:
        p = np.asarray(self.paths, dtype=float)
        if p.ndim != 3 or p.shape[0] < 1:
            raise ValueError("paths must be a (P, K+1, N) array with P >= 1")
        if p.shape[1] != self.steps + 1:
            raise ValueError(f"paths have {p.shape[1]} nodes, expected {self.steps + 1}")
        if not np.all(np.isfinite(p)):
            raise ValueError("paths must be finite")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.batches < 1:
            raise ValueError("at least one batch is required")
        object.__setattr__(self, "paths", p)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


def _batch_sizes(paths: int, batches: int) -> list[int]:
    batches = min(batches, paths)
    base, rem = divmod(paths, batches)
    return [base + (1 if b < rem else 0) for b in range(batches)]


def _simulate_batch(
    model: SpectralModel,
    noise: NoiseModel,
    gmap: AffineNoiseMap,
    x0_mean: np.ndarray,
    x0_cov_factor: Optional[np.ndarray],
    steps: int,
    substeps: int,
    count: int,
    rng: np.random.Generator,
    out: np.ndarray,
    inc_out: Optional[np.ndarray],
) -> None:
    dt = model.horizon / (steps * substeps)
    decay = np.exp(-model.eigenvalues * dt)
    if x0_cov_factor is None:
        x = np.tile(x0_mean, (count, 1))
    else:
        x = x0_mean + rng.standard_normal((count, model.dim)) @ x0_cov_factor.T
    out[:, 0] = x
    for k in range(steps):
        for s in range(substeps):
            dL = sample_increments(noise, dt, count, rng)
            if inc_out is not None:
                inc_out[:, k * substeps + s] = dL
            x = (x + g_apply(gmap, x, dL)) * decay
        out[:, k + 1] = x


def simulate_ensemble(
    model: SpectralModel,
    noise: NoiseModel,
    gmap: AffineNoiseMap,
    x0_mean: np.ndarray,
    steps: int,
    paths: int,
    seed: int,
    x0_cov: Optional[np.ndarray] = None,
    substeps: int = 1,
    batches: int = 32,
    threads: int = 1,
    return_increments: bool = False,
):
    """Simulate an ensemble of independent paths.

    The recording grid has `steps` intervals; each is advanced with
    `substeps` internal scheme steps, which refines the time stepping
    without enlarging the stored grid. Batch b draws from the stream
    [seed, b], so the result does not depend on the thread count.

    x0_cov, when given, samples Gaussian initial values with that
    covariance around x0_mean; otherwise the initial value is the
    deterministic vector x0_mean.
    """
    if steps < 1 or substeps < 1:
        raise ValueError("steps and substeps must be positive")
    if paths < 1:
        raise ValueError("path count must be positive")
    _check_compatible(model, noise, gmap)
    x0_mean = np.asarray(x0_mean, dtype=float)
    if x0_mean.shape != (model.dim,):
        raise ValueError(f"initial mean must have length {model.dim}")
    factor = None
    if x0_cov is not None:
        cov = np.asarray(x0_cov, dtype=float)
        if cov.shape != (model.dim, model.dim):
            raise ValueError(f"initial covariance must be {model.dim}x{model.dim}")
        if not np.allclose(cov, cov.T, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
            raise ValueError("initial covariance must be symmetric")
        w, v = np.linalg.eigh(cov)
        if np.any(w < -1e-10 * max(1.0, float(w.max(initial=0.0)))):
            raise ValueError("initial covariance must be positive semidefinite")
        factor = v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
    if return_increments and substeps != 1:
        raise ValueError("increments can only be returned for substeps == 1")

    sizes = _batch_sizes(paths, batches)
    nb = len(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    all_paths = np.empty((paths, steps + 1, model.dim))
    all_incs = np.empty((paths, steps, noise.dim)) if return_increments else None

    def run(b: int) -> None:
        rng = np.random.default_rng([seed, b])
        lo, hi = offsets[b], offsets[b + 1]
        inc_view = all_incs[lo:hi] if all_incs is not None else None
        _simulate_batch(
            model, noise, gmap, x0_mean, factor, steps, substeps,
            sizes[b], rng, all_paths[lo:hi], inc_view,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(nb)))
    else:
        for b in range(nb):
            run(b)

    ens = Ensemble(paths=all_paths, seed=seed, steps=steps, horizon=model.horizon, batches=nb)
    if return_increments:
        return ens, all_incs
    return ens


@dataclass(frozen=True)
class MomentEstimate:
    """Sample mean, two-time second moment, and covariance of an ensemble,
    with batch-means standard errors per entry.

    The covariance field is second_moment minus the outer product of the
    mean, evaluated exactly as stored (the two fields are consistent bit
    for bit).
    """

    mean: np.ndarray            # (K+1, N)
    second_moment: np.ndarray   # (K+1, N, K+1, N)
    covariance: np.ndarray      # (K+1, N, K+1, N)
    mean_se: np.ndarray
    second_moment_se: np.ndarray
    covariance_se: np.ndarray


def estimate_moments(ensemble: Ensemble) -> MomentEstimate:
    """Estimate moments over the ensemble's paths.

    Standard errors come from the spread of the per-batch statistics
    over the same batches the ensemble was generated with. The two-time
    fields hold ((K+1) N)^2 entries each; keep recording grids coarse
    and refine the stepping through substeps instead.
    """
    P = ensemble.n_paths
    if P < 2:
        raise ValueError(f"at least two paths are required, got {P}")
    paths = ensemble.paths
    nodes, dim = paths.shape[1], paths.shape[2]
    D = nodes * dim
    flat = paths.reshape(P, D)

    sizes = _batch_sizes(P, ensemble.batches)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    nb = len(sizes)
    b_mean = np.empty((nb, D))
    b_m2 = np.empty((nb, D, D))
    b_cov = np.empty((nb, D, D))
    for b in range(nb):
        chunk = flat[offsets[b]:offsets[b + 1]]
        b_mean[b] = chunk.mean(axis=0)
        b_m2[b] = chunk.T @ chunk / chunk.shape[0]
        b_cov[b] = b_m2[b] - np.outer(b_mean[b], b_mean[b])

    mean = flat.mean(axis=0)
    m2 = flat.T @ flat / P
    cov = m2 - np.outer(mean, mean)
    mean_se = b_mean.std(axis=0, ddof=1) / np.sqrt(nb)
    m2_se = b_m2.std(axis=0, ddof=1) / np.sqrt(nb)
    cov_se = b_cov.std(axis=0, ddof=1) / np.sqrt(nb)

    shape2 = (nodes, dim, nodes, dim)
    return MomentEstimate(
        mean=mean.reshape(nodes, dim),
        second_moment=m2.reshape(shape2),
        covariance=cov.reshape(shape2),
        mean_se=mean_se.reshape(nodes, dim),
        second_moment_se=m2_se.reshape(shape2),
        covariance_se=cov_se.reshape(shape2),
    )


def weak_identity_residual(
    path: np.ndarray,
    v: np.ndarray,
    model: SpectralModel,
    gmap: AffineNoiseMap,
    increments: np.ndarray,
) -> float:
    """Residual of the weak form of the mild solution along one path.

    The left side integrates the path against the test function under
    the adjoint parabolic operator; the right side carries the initial
    pairing plus the stochastic integral. Both use quadratures aligned
    with the simulation grid: left endpoints for the path and the
    stochastic integrand, trapezoids for the operator term. The residual
    shrinks as the grid refines.
    """
    path = np.asarray(path, dtype=float)
    v = np.asarray(v, dtype=float)
    increments = np.asarray(increments, dtype=float)
    if path.ndim != 2 or path.shape[1] != model.dim:
        raise ValueError(f"path must be (K+1, {model.dim})")
    K = path.shape[0] - 1
    if v.shape != path.shape:
        raise ValueError(f"test function shape {v.shape} != path shape {path.shape}")
    if increments.shape != (K, gmap.noise_dim):
        raise ValueError(f"increments must be (K, {gmap.noise_dim})")
    if np.max(np.abs(v[-1])) > 1e-12:
        raise ValueError("test function must vanish at the final node")

    dt = model.horizon / K
    lam = model.eigenvalues
    x_left = path[:-1]
    v_mid = 0.5 * (v[:-1] + v[1:])
    dv = (v[1:] - v[:-1]) / dt
    lhs = dt * float(np.sum(x_left * (lam * v_mid - dv)))
    noise_term = g_apply(gmap, x_left, increments)  # (K, N), left-point integrand
    rhs = float(path[0] @ v[0]) + float(np.sum(v[:-1] * noise_term))
    return lhs - rhs


def ito_isometry_check(
    noise: NoiseModel,
    v1: np.ndarray,
    v2: np.ndarray,
    phi: np.ndarray,
    samples: int,
    rng: np.random.Generator,
    horizon: float = 1.0,
) -> tuple[float, float, float]:
    """Monte Carlo check of the isometry for weak stochastic integrals.

    v1, v2 are deterministic time-nodal (K+1, N) test functions and phi
    a deterministic (K+1, N, M) integrand. The left side estimates the
    expected product of the two weak integrals by simulation with
    left-point quadrature; the right side is the matching quadrature of
    sum_m gamma_m <v1, phi e_m> <v2, phi e_m>. Returns (lhs, rhs, z).
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if v1.shape != v2.shape or v1.ndim != 2:
        raise ValueError("v1 and v2 must be (K+1, N) arrays of equal shape")
    if phi.shape != (v1.shape[0], v1.shape[1], noise.dim):
        raise ValueError(f"phi must have shape {(v1.shape[0], v1.shape[1], noise.dim)}")
    if samples < 2:
        raise ValueError("at least two samples are required")
    K = v1.shape[0] - 1
    dt = horizon / K

    a1 = np.einsum("kn,knm->km", v1[:-1], phi[:-1])  # (K, M) left-point integrands
    a2 = np.einsum("kn,knm->km", v2[:-1], phi[:-1])
    i1 = np.zeros(samples)
    i2 = np.zeros(samples)
    for k in range(K):
        dL = sample_increments(noise, dt, samples, rng)
        i1 += dL @ a1[k]
        i2 += dL @ a2[k]
    product = i1 * i2
    lhs = float(product.mean())
    rhs = float(dt * np.einsum("km,km,m->", a1, a2, noise.q_eigenvalues))
    se = float(product.std(ddof=1) / np.sqrt(samples))
    z = (lhs - rhs) / se if se > 0.0 else 0.0
    return lhs, rhs, z
