import math

import numpy as np
import pytest

from flatness import (AscentError, GridError, bound_components,
                      covering_number_bound, geometry_diag, gibbs_objective,
                      gibbs_oracle, gibbs_posterior_grid, make_bound_inputs,
                      make_gibbs_grid, pac_bayes_bound_term, sam_perturb,
                      sharpness, sharpness_aware_grid, sigma_from_rho,
                      total_variation)
from models import init_params, make_mlp_spec, mlp_loss_and_grad


def quadratic(diag):
    A = np.asarray(diag, dtype=float)

    def grad_fn(theta):
        return 0.5 * float(theta @ (A * theta)), A * theta
    return grad_fn


def bound_term_by_hand(k, n, R, rho, delta):
    inner = 1 + 2 * math.log(2 * R * math.sqrt(k)) + 2 / k * math.log(n)
    complexity = (k * (1 + math.log(1 + 2 * R ** 2 / rho ** 2 * inner))
                  + 2 * math.log(n / delta))
    return 1 / math.sqrt(n) + math.sqrt(complexity / (4 * (n - 1)))


class TestGeometryDiag:
    def test_identity(self, rng):
        np.testing.assert_array_equal(
            geometry_diag(rng.standard_normal(4), np.ones(4)), np.ones(4))

    def test_mu_over_sigma(self):
        np.testing.assert_allclose(
            geometry_diag([2.0, -3.0], [1.0, 3.0], 'mu-over-sigma'), [2, 1])

    def test_floor(self):
        np.testing.assert_array_equal(
            geometry_diag([0.0], [1.0], 'mu-over-sigma'), [1e-12])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            geometry_diag([0.0], [1.0], 'fisher')


class TestSamPerturb:
    def test_zero_radius(self, rng):
        mu = rng.standard_normal(5)
        assert np.array_equal(sam_perturb(mu, rng.standard_normal(5), 0.0),
                              mu)

    def test_zero_gradient(self):
        mu = np.array([1.0, 2.0])
        assert np.array_equal(sam_perturb(mu, np.zeros(2), 0.1), mu)

    def test_three_four_five(self):
        np.testing.assert_allclose(
            sam_perturb(np.zeros(2), np.array([3.0, 4.0]), 0.05),
            [0.03, 0.04], atol=1e-12)

    def test_identity_constraint_tight(self, rng):
        for _ in range(1000):
            k = rng.integers(1, 50)
            mu, g = rng.standard_normal(k), rng.standard_normal(k)
            rho = rng.uniform(1e-3, 1.0)
            step = sam_perturb(mu, g, rho) - mu
            assert abs(np.linalg.norm(step) - rho) < 1e-9

    def test_geometry_constraint_tight(self, rng):
        # Step length measured in the norm sqrt(v^T T^-1 v).
        for _ in range(1000):
            k = rng.integers(1, 50)
            mu, g = rng.standard_normal(k), rng.standard_normal(k)
            t = rng.uniform(0.1, 10.0, k)
            rho = rng.uniform(1e-3, 1.0)
            v = sam_perturb(mu, g, rho, t) - mu
            assert abs(math.sqrt(v @ (v / t)) - rho) < 1e-9

    def test_gradient_scale_invariant(self, rng):
        for _ in range(100):
            k = rng.integers(1, 50)
            mu, g = rng.standard_normal(k), rng.standard_normal(k)
            t = rng.uniform(0.1, 10.0, k)
            c = rng.uniform(1e-3, 1e3)
            np.testing.assert_allclose(sam_perturb(mu, c * g, 0.1, t),
                                       sam_perturb(mu, g, 0.1, t), atol=1e-12)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            sam_perturb(np.zeros(1), np.ones(1), -0.1)


class TestSharpness:
    def test_quadratic_one_dimension(self):
        value = sharpness(quadratic([2.0]), np.zeros(1), 0.1)
        assert value == pytest.approx(0.01, abs=1e-4)

    def test_constant_loss(self):
        value = sharpness(lambda t: (1.5, np.zeros_like(t)), np.zeros(3), 0.1)
        assert value == 0.0

    def test_anisotropic_quadratic(self):
        value = sharpness(quadratic([2.0, 6.0]), np.zeros(2), 1.0, 10)
        assert value == pytest.approx(3.0, abs=1e-2)

    def test_stays_in_ball(self):
        seen = []

        def grad_fn(theta):
            seen.append(theta.copy())
            return quadratic([1.0, 4.0, 9.0])(theta)

        theta = np.array([0.5, -0.2, 0.1])
        sharpness(grad_fn, theta, 0.3, 10)
        for point in seen:
            assert np.linalg.norm(point - theta) <= 0.3 + 1e-12

    def test_non_finite_loss(self):
        with pytest.raises(AscentError) as e:
            sharpness(lambda t: (np.nan, np.zeros_like(t)), np.zeros(2), 0.1)
        assert e.value.step == 0

    def test_non_finite_after_start(self):
        def grad_fn(theta):
            if np.any(theta != 0):
                return np.inf, np.zeros_like(theta)
            return 0.0, np.ones_like(theta)

        with pytest.raises(AscentError, match='ascent step 1') as e:
            sharpness(grad_fn, np.zeros(2), 0.1)
        assert e.value.step == 1

    def test_grows_with_radius(self, rng, small_moons):
        spec = make_mlp_spec([2, 16, 16, 2])
        grad_fn = mlp_loss_and_grad(spec, small_moons.features,
                                    small_moons.labels)
        for _ in range(5):
            theta = init_params(spec, rng).values
            values = [sharpness(grad_fn, theta, rho)
                      for rho in (0.01, 0.05, 0.1)]
            assert values == sorted(values)

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            sharpness(quadratic([1.0]), np.zeros(1), 0.0)


class TestGibbsGrid:
    def test_no_likelihood_gives_prior(self):
        grid = make_gibbs_grid(['a', 'b', 'c'], [0.0, 1.0, 5.0],
                               [0.2, 0.3, 0.5])
        np.testing.assert_allclose(gibbs_posterior_grid(grid, 0.0),
                                   [0.2, 0.3, 0.5], atol=1e-12)

    def test_two_points(self):
        grid = make_gibbs_grid(['a', 'b'], [0.0, math.log(2)])
        q = gibbs_posterior_grid(grid, 1.0)
        np.testing.assert_allclose(q, [2 / 3, 1 / 3], atol=1e-12)
        oracle = gibbs_oracle(grid, 1.0, 1e-3)
        assert total_variation(q, oracle) <= 2e-3

    def test_equal_losses(self):
        grid = make_gibbs_grid(['a', 'b'], [0.7, 0.7], [0.25, 0.75])
        np.testing.assert_allclose(gibbs_posterior_grid(grid, 13.0),
                                   [0.25, 0.75], atol=1e-12)

    def test_lower_loss_more_mass(self, rng):
        for _ in range(50):
            k = rng.integers(2, 20)
            loss = rng.permutation(np.linspace(0.0, 3.0, k))
            grid = make_gibbs_grid(list(range(k)), loss)
            q = gibbs_posterior_grid(grid, rng.uniform(0.1, 5.0))
            assert np.all(np.diff(q[np.argsort(loss)]) < 0)

    def test_oracle_no_likelihood(self):
        grid = make_gibbs_grid(['a', 'b', 'c'], [0.0, 1.0, 5.0],
                               [0.2, 0.3, 0.5])
        np.testing.assert_allclose(gibbs_oracle(grid, 0.0, 1e-3),
                                   [0.2, 0.3, 0.5], atol=1e-3)

    def test_oracle_single_point(self):
        grid = make_gibbs_grid(['a'], [3.0])
        np.testing.assert_array_equal(gibbs_oracle(grid, 2.0), [1.0])

    def test_closed_form_matches_oracle(self, rng):
        for _ in range(50):
            k = rng.integers(1, 5)
            grid = make_gibbs_grid(
                list(range(k)), rng.uniform(0, 3, k), rng.dirichlet(np.ones(k)),
                normalize=True)
            lam = rng.uniform(0, 3)
            q = gibbs_posterior_grid(grid, lam)
            oracle = gibbs_oracle(grid, lam, 1e-3)
            assert total_variation(q, oracle) <= 2e-3
            assert (gibbs_objective(q, grid, lam)
                    <= gibbs_objective(oracle, grid, lam) + 1e-9)

    def test_sharpness_aware_grid(self):
        grid = make_gibbs_grid(['a', 'b', 'c', 'd'], [0.0, 1.0, 0.2, 0.1])
        sharpened = sharpness_aware_grid(grid, [0.0, 0.1, 0.2, 0.5], 0.1)
        np.testing.assert_array_equal(sharpened.loss, [1.0, 1.0, 1.0, 0.1])
        q = gibbs_posterior_grid(sharpened, 2.0)
        assert total_variation(q, gibbs_oracle(sharpened, 2.0)) <= 2e-3

    def test_zero_radius_keeps_losses(self, rng):
        grid = make_gibbs_grid(['a', 'b', 'c'], rng.uniform(0, 1, 3))
        sharpened = sharpness_aware_grid(grid, rng.standard_normal((3, 2)),
                                         0.0)
        np.testing.assert_array_equal(sharpened.loss, grid.loss)

    def test_too_many_points_for_oracle(self):
        grid = make_gibbs_grid(list('abcde'), np.zeros(5))
        with pytest.raises(GridError):
            gibbs_oracle(grid, 1.0)

    def test_prior_must_sum_to_one(self):
        with pytest.raises(GridError):
            make_gibbs_grid(['a', 'b'], [0.0, 1.0], [0.5, 0.6])

    def test_mismatched_lengths(self):
        with pytest.raises(GridError):
            make_gibbs_grid(['a', 'b'], [0.0])


class TestCoveringNumberBound:
    def test_exact_value(self):
        assert covering_number_bound(1.0, 2, 1.0).value == 8

    def test_unit_base(self):
        R, k = 1.5, 4
        bound = covering_number_bound(R, k, 2 * R * math.sqrt(k))
        assert bound.value == pytest.approx(1.0, abs=1e-12)

    def test_log_value(self):
        bound = covering_number_bound(1.0, 50, 0.1)
        assert bound.log_value == pytest.approx(
            50 * math.log(20 * math.sqrt(50)), rel=1e-12)
        assert not bound.overflow

    def test_overflow(self):
        bound = covering_number_bound(1.0, 10000, 1e-3)
        assert bound.overflow
        assert bound.value is None
        assert math.isfinite(bound.log_value)


class TestSigmaFromRho:
    def test_vanishing_correction(self):
        assert sigma_from_rho(0.05, 4, 1, 1) == pytest.approx(0.05 / 2)

    def test_reference_value(self):
        assert sigma_from_rho(0.05, 4, 8, 100) == pytest.approx(1.008e-2,
                                                                rel=1e-3)

    def test_decreasing(self):
        by_n = [sigma_from_rho(0.05, 4, 8, n) for n in [10, 100, 1000, 10000]]
        by_N = [sigma_from_rho(0.05, 4, N, 100) for N in [1, 10, 100, 1000]]
        assert np.all(np.diff(by_n) < 0)
        assert np.all(np.diff(by_N) < 0)


class TestPacBayesBound:
    def test_reference_value(self):
        inputs = make_bound_inputs(1, 2, 1.0, 1.0, 1.0)
        value = pac_bayes_bound_term(inputs)
        assert value == pytest.approx(1.7715, abs=1e-3)
        assert value == pytest.approx(bound_term_by_hand(1, 2, 1.0, 1.0, 1.0),
                                      rel=1e-12)

    def test_decreasing_in_n(self):
        values = [pac_bayes_bound_term(make_bound_inputs(10, n, 1.0, 0.05,
                                                         0.05))
                  for n in [10 ** 3, 10 ** 5, 10 ** 7, 10 ** 9]]
        assert np.all(np.diff(values) < 0)

    def test_non_decreasing_in_R(self):
        values = [pac_bayes_bound_term(make_bound_inputs(10, 1000, R, 0.05,
                                                         0.05))
                  for R in [0.5, 1.0, 2.0, 4.0]]
        assert np.all(np.diff(values) >= 0)

    def test_omega(self):
        base = pac_bayes_bound_term(make_bound_inputs(3, 100, 1.0, 0.1, 0.05))
        shifted = pac_bayes_bound_term(
            make_bound_inputs(3, 100, 1.0, 0.1, 0.05, omega=0.25))
        assert shifted - base == pytest.approx(0.5)

    def test_components_sum(self):
        parts = bound_components(make_bound_inputs(10, 1000, 1.0, 0.05, 0.05))
        assert parts.total == pytest.approx(
            parts.inv_sqrt_n + parts.omega_term + parts.sqrt_term, rel=1e-15)
        assert parts.total == pac_bayes_bound_term(
            make_bound_inputs(10, 1000, 1.0, 0.05, 0.05))
        assert parts.sigma > 0

    def test_needs_two_examples(self):
        with pytest.raises(ValueError):
            pac_bayes_bound_term(make_bound_inputs(1, 1, 1.0, 1.0, 1.0))

    @pytest.mark.parametrize('kwargs', [
        {'k': 0}, {'R': 0.0}, {'rho': -1.0}, {'delta': 0.0}, {'omega': -1.0}])
    def test_bad_inputs(self, kwargs):
        args = {'k': 2, 'n': 10, 'R': 1.0, 'rho': 0.1, 'delta': 0.05}
        args.update(kwargs)
        with pytest.raises(ValueError):
            make_bound_inputs(**args)
