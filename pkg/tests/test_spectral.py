import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from spde_moments import (
    SpectralModel,
    dirichlet_laplacian,
    fractional_norm,
    semigroup_apply,
    smoothing_integral,
)


class TestDirichletLaplacian:
    def test_single_mode_unit_length_pi(self):
        model = dirichlet_laplacian(1, math.pi)
        assert model.eigenvalues == pytest.approx([1.0])

    def test_three_modes(self):
        model = dirichlet_laplacian(3, math.pi)
        assert model.eigenvalues == pytest.approx([1.0, 4.0, 9.0])

    def test_unit_length(self):
        model = dirichlet_laplacian(2, 1.0)
        assert model.eigenvalues == pytest.approx([math.pi ** 2, 4 * math.pi ** 2])

    @pytest.mark.parametrize("dim,length", [(0, 1.0), (-2, 1.0), (1, 0.0), (1, -3.0)])
    def test_invalid_arguments(self, dim, length):
        with pytest.raises(ValueError):
            dirichlet_laplacian(dim, length)


class TestModelInvariants:
    def test_rejects_nonpositive_eigenvalue(self):
        with pytest.raises(ValueError):
            SpectralModel(eigenvalues=[0.0, 1.0])

    def test_rejects_descending(self):
        with pytest.raises(ValueError):
            SpectralModel(eigenvalues=[2.0, 1.0])

    def test_rejects_bad_horizon(self):
        with pytest.raises(ValueError):
            SpectralModel(eigenvalues=[1.0], horizon=0.0)


class TestSemigroup:
    def test_identity_at_time_zero(self):
        model = SpectralModel(eigenvalues=[1.0])
        assert semigroup_apply(model, 0.0, np.array([5.0])) == pytest.approx([5.0])

    def test_scalar_exponential(self):
        model = SpectralModel(eigenvalues=[1.0])
        out = semigroup_apply(model, 1.0, np.array([1.0]))
        assert out == pytest.approx([math.exp(-1.0)])

    def test_per_mode_decay(self):
        # independent oracle: plain scalar exponentials per mode
        model = SpectralModel(eigenvalues=[1.0, 4.0])
        out = semigroup_apply(model, 0.5, np.array([1.0, 1.0]))
        assert out == pytest.approx([math.exp(-0.5), math.exp(-2.0)], rel=1e-14)

    def test_negative_time_rejected(self):
        model = SpectralModel(eigenvalues=[1.0])
        with pytest.raises(ValueError):
            semigroup_apply(model, -0.1, np.array([1.0]))

    def test_length_mismatch_rejected(self):
        model = SpectralModel(eigenvalues=[1.0, 2.0])
        with pytest.raises(ValueError):
            semigroup_apply(model, 0.1, np.array([1.0]))

    @settings(max_examples=100, deadline=None)
    @given(
        t=st.floats(0.0, 1.0),
        s=st.floats(0.0, 1.0),
        x=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    )
    def test_composition(self, t, s, x):
        model = SpectralModel(eigenvalues=[0.5, 1.0, 7.0], horizon=2.0)
        x = np.asarray(x)
        once = semigroup_apply(model, t + s, x)
        twice = semigroup_apply(model, t, semigroup_apply(model, s, x))
        np.testing.assert_allclose(twice, once, rtol=1e-12, atol=1e-300)

    @settings(max_examples=100, deadline=None)
    @given(
        t=st.floats(0.0, 2.0),
        r=st.sampled_from([-1.0, 0.0, 1.0]),
        x=st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    )
    def test_contraction_in_every_scale_norm(self, t, r, x):
        model = SpectralModel(eigenvalues=[0.3, 5.0], horizon=2.0)
        x = np.asarray(x)
        after = fractional_norm(model, r, semigroup_apply(model, t, x))
        before = fractional_norm(model, r, x)
        assert after <= before * (1 + 1e-12)


class TestFractionalNorm:
    def test_energy_norm(self):
        model = SpectralModel(eigenvalues=[4.0])
        assert fractional_norm(model, 1.0, np.array([1.0])) == pytest.approx(2.0)

    def test_base_norm_is_euclidean(self):
        model = SpectralModel(eigenvalues=[4.0])
        assert fractional_norm(model, 0.0, np.array([3.0])) == pytest.approx(3.0)

    def test_dual_norm(self):
        model = SpectralModel(eigenvalues=[4.0])
        assert fractional_norm(model, -1.0, np.array([2.0])) == pytest.approx(1.0)

    def test_exponent_outside_range_rejected(self):
        model = SpectralModel(eigenvalues=[4.0])
        with pytest.raises(ValueError):
            fractional_norm(model, 1.5, np.array([1.0]))

    def test_monotone_in_exponent_for_eigenvalues_above_one(self):
        model = SpectralModel(eigenvalues=[1.0, 3.0, 10.0])
        rng = np.random.default_rng(31)
        for _ in range(50):
            x = rng.standard_normal(3)
            norms = [fractional_norm(model, r, x) for r in (-1.0, -0.5, 0.0, 0.5, 1.0)]
            assert all(a <= b * (1 + 1e-12) for a, b in zip(norms, norms[1:]))


class TestSmoothingIntegral:
    def test_saturates_at_one_half(self):
        model = SpectralModel(eigenvalues=[1.0], horizon=100.0)
        assert abs(smoothing_integral(model, 1, 100.0) - 0.5) < 1e-12

    def test_matches_quadrature(self):
        # independent oracle: numerical quadrature of the integrand
        model = SpectralModel(eigenvalues=[1.0], horizon=1.0)
        expected, _ = quad(lambda t: 1.0 * math.exp(-2.0 * t), 0.0, 1.0)
        value = smoothing_integral(model, 1, 1.0)
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(0.43233235838169365, abs=1e-15)

    def test_vanishes_for_tiny_upper_limit(self):
        model = SpectralModel(eigenvalues=[1.0, 5.0], horizon=1.0)
        assert abs(smoothing_integral(model, 2, 1e-12)) < 1e-10

    def test_mode_out_of_range(self):
        model = SpectralModel(eigenvalues=[1.0])
        with pytest.raises(ValueError):
            smoothing_integral(model, 2, 0.5)
        with pytest.raises(ValueError):
            smoothing_integral(model, 0, 0.5)

    def test_upper_out_of_range(self):
        model = SpectralModel(eigenvalues=[1.0], horizon=1.0)
        with pytest.raises(ValueError):
            smoothing_integral(model, 1, 1.5)

    @settings(max_examples=200, deadline=None)
    @given(lam=st.floats(1e-3, 1e3), frac=st.floats(1e-6, 1.0))
    def test_never_exceeds_one_half(self, lam, frac):
        model = SpectralModel(eigenvalues=[lam], horizon=2.0)
        assert smoothing_integral(model, 1, 2.0 * frac) <= 0.5
