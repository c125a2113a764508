"""Numerical laboratory for the second moment and covariance of parabolic
equations with affine multiplicative Levy noise, at finite spectral
dimension.

Three independent routes to the same moment fields cross-validate each
other: a space-time Petrov-Galerkin solver for the tensorized moment
problems, a matrix differential equation integrated by Runge-Kutta, and
Monte Carlo simulation of the mild solution.
"""

__version__ = "0.1.0"

from .levy import (
    NoiseModel,
    covariance_kernel,
    hs_norm_on_cameron_martin,
    q_sqrt_apply,
    sample_increment,
    sample_increments,
)
from .montecarlo import (
    AffineNoiseMap,
    Ensemble,
    MomentEstimate,
    estimate_moments,
    g1_v_to_hs_norm,
    g_apply,
    ito_isometry_check,
    simulate_ensemble,
    simulate_path,
    weak_identity_residual,
)
from .oracle import (
    MomentField,
    lyapunov_solve,
    mean_exact,
    noise_quadratic_form,
    two_time_extend,
)
from .petrov_galerkin import (
    AssemblyError,
    PerModeSystem,
    PicardNonConvergence,
    SpaceTimeMoment,
    TimeGrid,
    apply_tensor_operator,
    assemble_per_mode,
    discrete_inf_sup,
    per_mode_inf_sup,
    per_mode_operator_bound,
    picard_solve_second_moment,
    rhs_covariance,
    rhs_second_moment,
    solve_covariance,
    solve_mean,
    tdelta_assemble,
)
from .presets import diagonal_noise_map, scalar_noise_map, scaled_random_coupling
from .spectral import (
    SpectralModel,
    dirichlet_laplacian,
    fractional_norm,
    semigroup_apply,
    smoothing_integral,
)
from .tensors import (
    Tensor2,
    dual_pair,
    hilbert_norm,
    injective_norm,
    operator_tensor_apply,
    projective_norm,
)
