import warnings

import numpy as np
import pytest
from scipy.integrate import quad

import spde_moments.petrov_galerkin as pg
from spde_moments import (
    AffineNoiseMap,
    NoiseModel,
    PicardNonConvergence,
    SpectralModel,
    TimeGrid,
    apply_tensor_operator,
    assemble_per_mode,
    discrete_inf_sup,
    mean_exact,
    per_mode_inf_sup,
    per_mode_operator_bound,
    picard_solve_second_moment,
    rhs_covariance,
    rhs_second_moment,
    solve_covariance,
    solve_mean,
    tdelta_assemble,
)

from conftest import multimode_setup


def scalar_system(steps, lam=1.0, horizon=1.0):
    model = SpectralModel(eigenvalues=[lam], horizon=horizon)
    return assemble_per_mode(model, TimeGrid(steps=steps, horizon=horizon))


def hat(nodes, l, t):
    dt = nodes[1] - nodes[0]
    return max(0.0, 1.0 - abs(t - nodes[l]) / dt)


class TestAssembly:
    def test_grid_needs_two_steps(self):
        with pytest.raises(ValueError):
            TimeGrid(steps=1, horizon=1.0)

    def test_horizon_mismatch_rejected(self):
        model = SpectralModel(eigenvalues=[1.0], horizon=2.0)
        with pytest.raises(ValueError):
            assemble_per_mode(model, TimeGrid(steps=4, horizon=1.0))

    def test_two_step_hand_values(self):
        # hand quadrature, lam = 1, dt = 1/2: pairing of the two interval
        # indicators against the two hats gives
        #   row 1: [1 + dt/2, -1 + dt/2], row 2: [0, 1 + dt/2]
        system = scalar_system(2)
        np.testing.assert_allclose(
            system.operator[0], [[1.25, -0.75], [0.0, 1.25]], atol=1e-14
        )
        np.testing.assert_allclose(system.trial_gram_diag[0], [0.5, 0.5], atol=1e-15)
        # graph-norm Gram of the hats: mass [[1/6, 1/12], [1/12, 1/3]]
        # plus stiffness [[2, -2], [-2, 4]]
        np.testing.assert_allclose(
            system.test_gram[0],
            [[13.0 / 6.0, -23.0 / 12.0], [-23.0 / 12.0, 13.0 / 3.0]],
            atol=1e-14,
        )

    def test_pairing_matches_quadrature(self):
        # independent oracle: numerical quadrature of hats against indicators
        lam, steps = 3.7, 7
        system = scalar_system(steps, lam=lam)
        nodes = np.linspace(0.0, 1.0, steps + 1)
        expected = np.zeros((steps, steps))
        for i in range(steps):
            for l in range(steps):
                mass_part, _ = quad(lambda t: hat(nodes, l, t), nodes[i], nodes[i + 1])
                expected[i, l] = hat(nodes, l, nodes[i]) - hat(nodes, l, nodes[i + 1]) + lam * mass_part
        np.testing.assert_allclose(system.operator[0], expected, atol=1e-12)

    def test_vanishing_eigenvalue_limit_is_telescoping(self):
        system = scalar_system(4, lam=1e-12)
        expected = np.eye(4) - np.diag(np.ones(3), 1)
        np.testing.assert_allclose(system.operator[0], expected, atol=1e-10)

    def test_mass_part_scales_with_dt_derivative_part_does_not(self):
        # the pairing is affine in lambda: operator = derivative + lambda * mass
        for horizon in (1.0, 2.0):
            sys1 = scalar_system(4, lam=1.0, horizon=horizon)
            sys3 = scalar_system(4, lam=3.0, horizon=horizon)
            mass = (sys3.operator[0] - sys1.operator[0]) / 2.0
            deriv = sys1.operator[0] - mass
            np.testing.assert_allclose(deriv, np.eye(4) - np.diag(np.ones(3), 1), atol=1e-13)
            np.testing.assert_allclose(
                mass[0, 0], horizon / 4.0 / 2.0, atol=1e-14
            )  # dt / 2 on the diagonal


class TestSolveMean:
    def test_zero_initial_mean(self):
        system = scalar_system(8)
        np.testing.assert_array_equal(solve_mean(system, np.zeros(1)), np.zeros((8, 1)))

    def test_scalar_convergence_to_exponential(self):
        errors = {}
        for steps in (64, 128):
            system = scalar_system(steps)
            coeffs = solve_mean(system, np.ones(1))
            exact = np.exp(-np.arange(1, steps + 1) / steps)
            errors[steps] = np.max(np.abs(coeffs[:, 0] - exact))
        assert errors[64] <= 0.05
        assert errors[64] / errors[128] == pytest.approx(2.0, abs=0.4)

    def test_modes_solve_independently(self):
        model = SpectralModel(eigenvalues=[1.0, 5.0])
        system = assemble_per_mode(model, TimeGrid(steps=6, horizon=1.0))
        stacked = solve_mean(system, np.array([2.0, -1.0]))
        for i, lam in enumerate([1.0, 5.0]):
            single = solve_mean(scalar_system(6, lam=lam), np.array([stacked[0, i] * 0 + [2.0, -1.0][i]]))
            np.testing.assert_allclose(stacked[:, i], single[:, 0], rtol=1e-13)


class TestTemporalWeights:
    def test_two_step_hand_values(self):
        w = tdelta_assemble(TimeGrid(steps=2, horizon=1.0))
        np.testing.assert_allclose(
            w[0], [[1.0 / 6.0, 1.0 / 12.0], [1.0 / 12.0, 1.0 / 6.0]], atol=1e-15
        )
        np.testing.assert_allclose(w[1], [[0.0, 0.0], [0.0, 1.0 / 6.0]], atol=1e-15)

    def test_matches_quadrature(self):
        steps = 5
        grid = TimeGrid(steps=steps, horizon=1.0)
        w = tdelta_assemble(grid)
        nodes = grid.nodes
        for i in range(steps):
            for l1 in range(steps):
                for l2 in range(steps):
                    expected, _ = quad(
                        lambda t: hat(nodes, l1, t) * hat(nodes, l2, t),
                        nodes[i], nodes[i + 1],
                    )
                    assert w[i, l1, l2] == pytest.approx(expected, abs=1e-13)

    def test_partition_of_unity_away_from_final_time(self):
        grid = TimeGrid(steps=6, horizon=1.0)
        w = tdelta_assemble(grid)
        dt = grid.dt
        for i in range(5):  # all intervals except the final one
            summed = w[i].sum(axis=0)
            expected = np.zeros(6)
            expected[i] = expected[i + 1] = dt / 2.0  # integral of each hat over I_i
            np.testing.assert_allclose(summed, expected, atol=1e-15)

    def test_locality(self):
        w = tdelta_assemble(TimeGrid(steps=8, horizon=1.0))
        for i in range(8):
            support = {i, i + 1} & set(range(8))
            for l1 in range(8):
                for l2 in range(8):
                    if l1 not in support or l2 not in support:
                        assert w[i, l1, l2] == 0.0

    def test_structured_apply_equals_dense_contraction(self):
        grid = TimeGrid(steps=7, horizon=1.3)
        rng = np.random.default_rng(23)
        spatial = rng.standard_normal((7, 3, 3))
        dense = np.einsum("kab,kij->aibj", tdelta_assemble(grid), spatial)
        np.testing.assert_allclose(pg._tdelta_apply(grid, spatial), dense, atol=1e-14)


class TestLoads:
    def test_zero_map_leaves_only_initial_term(self):
        system = scalar_system(4)
        noise = NoiseModel(q_eigenvalues=[1.0])
        gmap = AffineNoiseMap(g1=np.zeros((1, 1, 1)), g2=np.zeros((1, 1)))
        mean = solve_mean(system, np.ones(1))
        load = rhs_second_moment(system, noise, gmap, mean, np.array([[2.5]]))
        expected = np.zeros((4, 1, 4, 1))
        expected[0, 0, 0, 0] = 2.5
        np.testing.assert_array_equal(load, expected)

    def test_additive_noise_load_is_time_homogeneous(self):
        system = scalar_system(5)
        noise = NoiseModel(q_eigenvalues=[0.8])
        gmap = AffineNoiseMap(g1=np.zeros((1, 1, 1)), g2=np.full((1, 1), 2.0))
        mean = solve_mean(system, np.ones(1))
        load = rhs_second_moment(system, noise, gmap, mean, np.zeros((1, 1)))
        w = tdelta_assemble(system.grid)
        expected = np.einsum("kab->ab", w) * (2.0 ** 2 * 0.8)
        np.testing.assert_allclose(load[:, 0, :, 0], expected, atol=1e-14)

    def test_missing_mean_rejected(self):
        system = scalar_system(4)
        noise = NoiseModel(q_eigenvalues=[1.0])
        gmap = AffineNoiseMap(g1=np.zeros((1, 1, 1)), g2=np.ones((1, 1)))
        with pytest.raises(ValueError):
            rhs_second_moment(system, noise, gmap, None, np.zeros((1, 1)))

    def test_scalar_load_against_direct_quadrature(self):
        # independent oracle: quadrature of the hats against the piecewise
        # constant noise intensity 2 a b m_k + b^2 (the additive-involving
        # terms), plus the initial pairing at time zero
        a, b, steps = 0.5, 0.5, 8
        system = scalar_system(steps)
        noise = NoiseModel(q_eigenvalues=[1.0])
        gmap = AffineNoiseMap(g1=np.full((1, 1, 1), a), g2=np.full((1, 1), b))
        mean = solve_mean(system, np.ones(1))
        load = rhs_second_moment(system, noise, gmap, mean, np.array([[1.0]]))
        nodes = system.grid.nodes
        expected = np.zeros((steps, steps))
        expected[0, 0] = 1.0
        for l1 in range(steps):
            for l2 in range(steps):
                for k in range(steps):
                    intensity = 2 * a * b * mean[k, 0] + b * b
                    block, _ = quad(
                        lambda t: hat(nodes, l1, t) * hat(nodes, l2, t),
                        nodes[k], nodes[k + 1],
                    )
                    expected[l1, l2] += intensity * block
        np.testing.assert_allclose(load[:, 0, :, 0], expected, atol=1e-12)

    def test_covariance_load_additive_case_drops_initial_and_keeps_integral(self):
        system = scalar_system(5)
        noise = NoiseModel(q_eigenvalues=[0.8])
        gmap = AffineNoiseMap(g1=np.zeros((1, 1, 1)), g2=np.full((1, 1), 2.0))
        mean = solve_mean(system, np.ones(1))
        m2_load = rhs_second_moment(system, noise, gmap, mean, np.zeros((1, 1)))
        cov_load = rhs_covariance(system, noise, gmap, mean, np.zeros((1, 1)))
        np.testing.assert_allclose(cov_load, m2_load, atol=1e-15)


class TestPicard:
    def test_additive_case_converges_in_one_iteration(self):
        system = scalar_system(8)
        noise = NoiseModel(q_eigenvalues=[1.0])
        gmap = AffineNoiseMap(g1=np.zeros((1, 1, 1)), g2=np.ones((1, 1)))
        mean = solve_mean(system, np.zeros(1))
        load = rhs_second_moment(system, noise, gmap, mean, np.zeros((1, 1)))
        solution = picard_solve_second_moment(system, noise, gmap, load)
        assert solution.iterations == 1

    def test_solution_solves_its_final_load(self, multiplicative_map, unit_noise):
        system = scalar_system(16)
        mean = solve_mean(system, np.ones(1))
        load = rhs_second_moment(system, unit_noise, multiplicative_map, mean, np.ones((1, 1)))
        solution = picard_solve_second_moment(system, unit_noise, multiplicative_map, load)
        reproduced = apply_tensor_operator(system, solution.coeffs)
        scale = np.max(np.abs(solution.final_load))
        assert np.max(np.abs(reproduced - solution.final_load)) <= 10 * np.finfo(float).eps * scale

    def test_iterates_stay_symmetric_for_symmetric_loads(self):
        model, noise, gmap, x0 = multimode_setup()
        system = assemble_per_mode(model, TimeGrid(steps=8, horizon=1.0))
        mean = solve_mean(system, x0)
        load = rhs_second_moment(system, noise, gmap, mean, np.outer(x0, x0))
        coeffs = pg._kron_solve(system, load)
        for _ in range(3):
            sym_err = np.max(np.abs(coeffs - np.transpose(coeffs, (2, 3, 0, 1))))
            assert sym_err <= 1e-12 * max(1.0, np.max(np.abs(coeffs)))
            coeffs = pg._kron_solve(
                system, load + pg._coupling_load(system, noise, gmap, coeffs)
            )

    def test_mode_pairs_do_not_couple(self):
        model = SpectralModel(eigenvalues=[1.0, 4.0])
        system = assemble_per_mode(model, TimeGrid(steps=4, horizon=1.0))
        coeffs = np.zeros((4, 2, 4, 2))
        coeffs[:, 0, :, 1] = np.random.default_rng(0).standard_normal((4, 4))
        image = apply_tensor_operator(system, coeffs)
        assert np.all(image[:, 0, :, 0] == 0.0)
        assert np.all(image[:, 1, :, 0] == 0.0)
        assert np.all(image[:, 1, :, 1] == 0.0)
        assert np.any(image[:, 0, :, 1] != 0.0)

    def test_nonconvergence_raises_with_trace(self, unit_noise):
        system = scalar_system(8)
        gmap = AffineNoiseMap(g1=np.full((1, 1, 1), 0.5), g2=np.full((1, 1), 0.5))
        mean = solve_mean(system, np.ones(1))
        load = rhs_second_moment(system, unit_noise, gmap, mean, np.ones((1, 1)))
        with pytest.raises(PicardNonConvergence) as excinfo:
            picard_solve_second_moment(system, unit_noise, gmap, load, max_iter=1)
        assert len(excinfo.value.trace) == 1

    def test_supercritical_norm_warns_but_proceeds(self, unit_noise):
        system = scalar_system(4)
        gmap = AffineNoiseMap(g1=np.full((1, 1, 1), 1.2), g2=np.zeros((1, 1)))
        mean = solve_mean(system, np.zeros(1))
        load = rhs_second_moment(system, unit_noise, gmap, mean, np.ones((1, 1)))
        with pytest.warns(RuntimeWarning, match="no contraction guarantee"):
            picard_solve_second_moment(system, unit_noise, gmap, load, max_iter=200)

    def test_contraction_monitor_warns_on_slow_ratios(self):
        with pytest.warns(RuntimeWarning, match="contraction"):
            pg._contraction_report([1.0, 0.9, 0.85], bound=0.4, tol_floor=1e-14)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            pg._contraction_report([1.0, 0.1, 0.01], bound=0.4, tol_floor=1e-14)

    def test_covariance_equals_second_moment_minus_mean_square(self):
        model, noise, gmap, x0 = multimode_setup()
        system = assemble_per_mode(model, TimeGrid(steps=16, horizon=1.0))
        mean = solve_mean(system, x0)
        m2 = picard_solve_second_moment(
            system, noise, gmap,
            rhs_second_moment(system, noise, gmap, mean, np.outer(x0, x0)),
        )
        cov = solve_covariance(
            system, noise, gmap,
            rhs_covariance(system, noise, gmap, mean, np.zeros((4, 4))),
        )
        mean_sq = np.einsum("kn,lm->knlm", mean, mean)
        assert np.max(np.abs(cov.coeffs - (m2.coeffs - mean_sq))) <= 1e-8

    def test_diagonal_blocks_nearly_positive_semidefinite(self):
        model, noise, gmap, x0 = multimode_setup()
        system = assemble_per_mode(model, TimeGrid(steps=16, horizon=1.0))
        mean = solve_mean(system, x0)
        m2 = picard_solve_second_moment(
            system, noise, gmap,
            rhs_second_moment(system, noise, gmap, mean, np.outer(x0, x0)),
        )
        for block in m2.time_diagonal():
            assert np.linalg.eigvalsh(0.5 * (block + block.T)).min() >= -1e-8


class TestInfSup:
    def test_unit_eigenvalue_stable_across_refinement(self):
        values = [discrete_inf_sup(scalar_system(steps)) for steps in (16, 32, 64)]
        assert all(v > 0 for v in values)
        assert (max(values) - min(values)) / min(values) <= 0.10

    def test_smallest_below_largest(self):
        for lam in (1.0, 10.0, 100.0):
            system = scalar_system(32, lam=lam)
            assert per_mode_inf_sup(system)[0] <= per_mode_operator_bound(system)[0]

    def test_eigenvalue_sweep_bounded_below(self):
        values = {
            lam: discrete_inf_sup(scalar_system(32, lam=lam)) for lam in (1.0, 10.0, 100.0)
        }
        assert all(v >= 0.2 for v in values.values())

    def test_minimum_over_modes(self):
        model = SpectralModel(eigenvalues=[1.0, 100.0])
        system = assemble_per_mode(model, TimeGrid(steps=16, horizon=1.0))
        per = per_mode_inf_sup(system)
        assert discrete_inf_sup(system) == pytest.approx(per.min())

    def test_operator_bounded_below_in_gram_norms(self):
        # consistency of the Gram plumbing: for any coefficients,
        # the dual norm of the pairing dominates the discrete inf-sup
        # value times the trial norm
        model = SpectralModel(eigenvalues=[1.0, 7.0])
        system = assemble_per_mode(model, TimeGrid(steps=12, horizon=1.0))
        beta = discrete_inf_sup(system)
        rng = np.random.default_rng(29)
        for _ in range(25):
            u = rng.standard_normal((12, 2))
            dual_sq = 0.0
            trial_sq = 0.0
            for n in range(2):
                f = system.operator[n].T @ u[:, n]
                dual_sq += f @ np.linalg.solve(system.test_gram[n], f)
                trial_sq += np.sum(system.trial_gram_diag[n] * u[:, n] ** 2)
            assert np.sqrt(dual_sq) >= beta * np.sqrt(trial_sq) - 1e-10
