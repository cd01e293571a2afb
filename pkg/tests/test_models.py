"""
Tests for the stream models: LLR increments, simulation and information numbers.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermegauss
from scipy import stats

from multistream_detect.errors import ConfigurationError, ModelDomainError
from multistream_detect.models import (
    AutoregressiveModel,
    EpidemicBinomialModel,
    EpidemicGaussianModel,
    IIDGaussianModel,
    KLCoefficients,
    KLPair,
    RandomCoefficientLinearModel,
    create_model,
)
from multistream_detect.models.linear import kronecker_moment


def epidemic_log_density(theta, y, x, scale=1.0):
    sd = math.sqrt(theta * (1.0 - theta) / scale) * math.sqrt(abs(x))
    return stats.norm.logpdf(y, loc=(1.0 - theta) * x, scale=sd)


class TestLLRIncrements:
    """Test one-step log-likelihood ratios."""

    def test_gaussian_mean_shift(self):
        """Test mu y - mu^2 / 2 at mu = 1, y = 2."""
        assert IIDGaussianModel().llr_increment(1.0, 2.0, np.zeros(0)) == pytest.approx(1.5)

    def test_ar1_formula(self):
        """Test y (theta - theta*) x + ((theta* x)^2 - (theta x)^2) / 2."""
        model = AutoregressiveModel(0.0)
        assert model.llr_increment(0.5, 0.7, np.array([1.0])) == pytest.approx(0.225, abs=1e-12)

    def test_epidemic_density_ratio(self):
        """Test the Gaussian epidemic LLR against two numerically evaluated log densities."""
        model = EpidemicGaussianModel(0.01)
        expected = epidemic_log_density(0.012, 0.99, 1.0) - epidemic_log_density(0.01, 0.99, 1.0)
        assert model.llr_increment(0.012, 0.99, np.array([1.0])) == pytest.approx(expected, abs=1e-10)

    def test_epidemic_scaled_density_ratio(self):
        """Test the capacity-scaled variance."""
        model = EpidemicGaussianModel(0.01, scale=2.0e4)
        y, x = 0.9885, 0.998
        expected = epidemic_log_density(0.012, y, x, 2.0e4) - epidemic_log_density(0.01, y, x, 2.0e4)
        assert model.llr_increment(0.012, y, np.array([x])) == pytest.approx(expected, abs=1e-8)

    def test_binomial_density_ratio(self):
        """Test the binomial LLR against scipy log pmfs."""
        model = EpidemicBinomialModel(0.01)
        expected = stats.binom.logpmf(95, 100, 1 - 0.02) - stats.binom.logpmf(95, 100, 1 - 0.01)
        assert model.llr_increment(0.02, 95.0, np.array([100.0])) == pytest.approx(expected, abs=1e-10)

    def test_linear_density_ratio(self):
        """Test the random-coefficient LLR against multivariate normal densities."""
        model = RandomCoefficientLinearModel(
            theta_star=np.zeros((2, 2)), noise_cov=np.eye(2), coef_cov=0.01 * np.eye(4)
        )
        theta = np.array([[0.3, 0.1], [0.0, 0.2]])
        x = np.array([1.5, -0.5])
        y = np.array([0.4, 0.2])
        cov = model.conditional_covariance(x)
        expected = stats.multivariate_normal.logpdf(y, theta @ x, cov) - stats.multivariate_normal.logpdf(
            y, np.zeros(2), cov
        )
        assert model.llr_increment(theta.ravel(), y, x) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize(
        "model, y, state",
        [
            (IIDGaussianModel(0.3), 1.7, np.zeros(0)),
            (AutoregressiveModel([0.5, 0.2]), -0.4, np.array([1.0, 0.3])),
            (EpidemicGaussianModel(0.02, scale=100.0), 0.97, np.array([0.99])),
            (EpidemicBinomialModel(0.02), 40.0, np.array([45.0])),
            (
                RandomCoefficientLinearModel(0.3 * np.eye(2), np.eye(2), 0.01 * np.eye(4)),
                np.array([0.1, 0.2]),
                np.array([1.0, 2.0]),
            ),
        ],
    )
    def test_pre_change_parameter_is_neutral(self, model, y, state):
        """Test that the LLR at theta* vanishes."""
        assert model.llr_increment(model.theta_star, y, state) == pytest.approx(0.0, abs=1e-12)

    def test_epidemic_zero_state_strict(self):
        """Test that a zero state is a domain error in strict mode."""
        with pytest.raises(ModelDomainError):
            EpidemicGaussianModel(0.01).llr_increment(0.012, 0.0, np.array([0.0]))

    def test_epidemic_zero_state_relaxed(self):
        """Test that the relaxed model evaluates at the guard floor."""
        model = EpidemicGaussianModel(0.01, strict=False)
        value = model.llr_increment(0.012, 0.0, np.array([0.0]))
        assert math.isfinite(value)
        assert model.state_guarded(np.array([0.0]))

    def test_binomial_support_violation(self):
        """Test that y > x is a domain error."""
        with pytest.raises(ModelDomainError):
            EpidemicBinomialModel(0.01).llr_increment(0.02, 11.0, np.array([10.0]))

    def test_telescoping_along_a_path(self):
        """Test that summed increments match the log of the product of density ratios."""
        model = AutoregressiveModel(0.2)
        rng = np.random.default_rng(11)
        state = model.initial_state()
        total, oracle = 0.0, 0.0
        for _ in range(200):
            y, new_state = model.simulate_step(0.6, state, rng)
            total += model.llr_increment(0.6, y, state)
            x = state[0]
            oracle += stats.norm.logpdf(y, 0.6 * x) - stats.norm.logpdf(y, 0.2 * x)
            state = new_state
        assert total == pytest.approx(oracle, rel=1e-9)

    def test_batch_matches_scalar(self):
        """Test that batched and per-point increments agree."""
        model = EpidemicGaussianModel(0.01)
        thetas = np.array([[0.0105], [0.011], [0.012]])
        batch = model.llr_batch(thetas, 0.985, np.array([1.0]))
        single = [model.llr_increment(t, 0.985, np.array([1.0])) for t in thetas]
        np.testing.assert_allclose(batch, single)


class TestSimulation:
    """Test one-step transitions."""

    def test_epidemic_deterministic_drift(self, zero_noise):
        """Test that zero noise gives (1 - p*) x."""
        y, state = EpidemicGaussianModel(0.01).simulate_step(None, np.array([1.0]), zero_noise)
        assert y == pytest.approx(0.99)
        assert state[0] == pytest.approx(0.99)

    def test_epidemic_zero_state_is_absorbing(self, constant_noise):
        """Test that state 0 propagates with zero diffusion."""
        y, _ = EpidemicGaussianModel(0.01).simulate_step(0.02, np.array([0.0]), constant_noise(3.0))
        assert y == 0.0

    def test_ar2_zero_coefficients_shift(self, constant_noise):
        """Test that zero coefficients return the noise and shift the state."""
        model = AutoregressiveModel([0.0, 0.0])
        y, state = model.simulate_step(None, np.array([0.3, 0.1]), constant_noise(0.7))
        assert y == pytest.approx(0.7)
        np.testing.assert_allclose(state, [0.7, 0.3])

    def test_linear_deterministic_map(self, zero_noise):
        """Test theta x with B = 0 and zero noise."""
        model = RandomCoefficientLinearModel(np.zeros((2, 2)), np.eye(2))
        y, state = model.simulate_step((0.5 * np.eye(2)).ravel(), np.array([2.0, 2.0]), zero_noise)
        np.testing.assert_allclose(y, [1.0, 1.0])
        np.testing.assert_allclose(state, [1.0, 1.0])

    def test_ar_stacked_matches_scalar_recursion(self):
        """Test the stacked state recursion against the scalar one with shared noise."""
        theta = np.array([0.5, -0.3])
        model = AutoregressiveModel(theta, noise_std=0.8)
        stacked_rng = np.random.default_rng(5)
        scalar_rng = np.random.default_rng(5)

        state = model.initial_state([0.2, -0.1])
        history = [-0.1, 0.2]
        for _ in range(100):
            y, state = model.simulate_step(None, state, stacked_rng)
            expected = theta[0] * history[-1] + theta[1] * history[-2] + 0.8 * scalar_rng.standard_normal()
            history.append(expected)
            assert y == pytest.approx(expected, abs=1e-12)

    def test_binomial_draws_stay_in_support(self):
        """Test binomial thinning bounds."""
        model = EpidemicBinomialModel(0.05)
        rng = np.random.default_rng(2)
        state = np.array([500.0])
        for _ in range(50):
            y, new_state = model.simulate_step(0.1, state, rng)
            assert 0.0 <= y <= state[0]
            state = new_state

    def test_epidemic_second_moment_bound(self):
        """Test mean(X_n^2) <= x^2 + 1 + 3 SE over 10^4 paths."""
        rng = np.random.default_rng(17)
        model = EpidemicGaussianModel(0.01)
        for theta in (0.01, 0.012, 0.05):
            paths = model.simulate_paths(theta, 1.0, 100, 10_000, rng)
            squares = paths[:, 1:] ** 2
            mean = squares.mean(axis=0)
            se = squares.std(axis=0, ddof=1) / math.sqrt(squares.shape[0])
            assert np.all(mean <= 2.0 + 3.0 * se)


class TestInformation:
    """Test closed-form and conditional information numbers."""

    def test_gaussian_closed_form(self):
        """Test mu^2 / 2 for a unit mean shift."""
        kl = IIDGaussianModel().closed_form_kl(1.0)
        assert kl.j_bar == pytest.approx(0.5)
        assert kl.j_star_bar == pytest.approx(-0.5)

    def test_ar1_closed_form(self):
        """Test the scalar AR(1) pair (1/6, -1/8)."""
        kl = AutoregressiveModel(0.0).closed_form_kl(0.5)
        assert kl.j_bar == pytest.approx(1.0 / 6.0, abs=1e-10)
        assert kl.j_star_bar == pytest.approx(-0.125, abs=1e-10)

    def test_ar_stationary_covariance_scalar(self):
        """Test F = sigma^2 / (1 - theta^2) in the scalar case."""
        cov = AutoregressiveModel(0.0, noise_std=2.0).stationary_covariance(0.6)
        assert cov[0, 0] == pytest.approx(4.0 / 0.64, rel=1e-10)

    @pytest.mark.parametrize(
        "model",
        [IIDGaussianModel(0.4), AutoregressiveModel([0.3, 0.2]), EpidemicGaussianModel(0.02, scale=50.0)],
    )
    def test_closed_form_at_theta_star(self, model):
        """Test that the pair vanishes at theta*."""
        kl = model.closed_form_kl(model.theta_star)
        if isinstance(kl, KLCoefficients):
            kl = kl.evaluate(0.5, 0.7)
        assert kl.j_bar == pytest.approx(0.0, abs=1e-12)
        assert kl.j_star_bar == pytest.approx(0.0, abs=1e-12)

    def test_linear_has_no_closed_form(self):
        """Test that the random-coefficient model defers to Monte Carlo."""
        model = RandomCoefficientLinearModel(np.zeros((2, 2)), np.eye(2), 0.01 * np.eye(4))
        assert model.closed_form_kl(0.1 * np.eye(2)) is None

    def test_binomial_ergodic_pair_is_degenerate(self):
        """Test the (0, 0) pair of the absorbing binomial law."""
        assert EpidemicBinomialModel(0.01).closed_form_kl(0.02) == KLPair(0.0, 0.0)

    def test_epidemic_conditional_matches_quadrature(self):
        """Test J against Gauss-Hermite quadrature of the LLR under f_theta."""
        model = EpidemicGaussianModel(0.01)
        theta, x = 0.012, 1.0
        nodes, weights = hermegauss(40)
        sigma = math.sqrt(theta * (1.0 - theta))
        ys = (1.0 - theta) * x + sigma * math.sqrt(x) * nodes
        values = [model.llr_increment(theta, y, np.array([x])) for y in ys]
        quadrature = float(np.dot(weights, values)) / math.sqrt(2.0 * math.pi)
        j, _ = model.conditional_information(theta, x)
        assert j == pytest.approx(quadrature, rel=1e-9)

    def test_epidemic_conditional_slope(self):
        """Test the linear-in-|x| slope (theta - p*)^2 / (2 p* (1 - p*))."""
        model = EpidemicGaussianModel(0.01)
        j1, _ = model.conditional_information(0.012, 1.0)
        j2, _ = model.conditional_information(0.012, 2.0)
        assert j2 - j1 == pytest.approx(0.002**2 / (2 * 0.01 * 0.99), rel=1e-10)

    def test_epidemic_conditional_at_p_star(self):
        """Test that theta = p* collapses both informations."""
        j, j_star = EpidemicGaussianModel(0.01).conditional_information(0.01, 0.8)
        assert j == pytest.approx(0.0, abs=1e-15)
        assert j_star == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("theta", [0.0, 1.0])
    def test_epidemic_conditional_domain(self, theta):
        """Test that theta at 0 or 1 is a domain error."""
        with pytest.raises(ModelDomainError):
            EpidemicGaussianModel(0.01).conditional_information(theta, 1.0)

    @pytest.mark.property
    @settings(max_examples=60, deadline=None)
    @given(theta=st.floats(0.001, 0.5), x=st.floats(0.01, 2.0))
    def test_epidemic_conditional_signs(self, theta, x):
        """Test J >= 0 >= J*, strictly away from p*."""
        j, j_star = EpidemicGaussianModel(0.05).conditional_information(theta, x)
        if abs(theta - 0.05) > 1e-3:
            assert j > 0.0
            assert j_star < 0.0
        else:
            assert j >= -1e-15
            assert j_star <= 1e-15


class TestDecayHorizon:
    """Test the information path length of the epidemic model."""

    @pytest.mark.parametrize(
        "p_star, theta, expected",
        [(1.0 / 105, 1.2 / 105, 261), (1.0 / 55, 0.02, 149), (1.0 / 105, None, 314)],
    )
    def test_steps_until_exp_minus_three(self, p_star, theta, expected):
        """Test ceil(3 / -log(1 - theta)) with p* standing in for a missing theta."""
        assert EpidemicGaussianModel(p_star).decay_horizon(theta) == expected

    def test_faster_decay_is_shorter(self):
        """Test that a larger rate reaches the floor sooner."""
        model = EpidemicGaussianModel(0.01)
        assert model.decay_horizon(0.05) < model.decay_horizon(0.02)

    def test_decay_must_be_positive(self):
        """Test rejection of a zero decay target."""
        with pytest.raises(ConfigurationError):
            EpidemicGaussianModel(0.01).decay_horizon(0.02, decay=0.0)


class TestStationarity:
    """Test admissible regions."""

    def test_ar1_boundary(self):
        """Test the unit-root boundary."""
        model = AutoregressiveModel(0.0)
        assert model.stationarity_check(0.99)
        assert not model.stationarity_check(1.0)

    def test_ar2_companion_roots(self):
        """Test against the roots of z^2 - 0.5 z - 0.4."""
        model = AutoregressiveModel([0.0, 0.0])
        roots = np.roots([1.0, -0.5, -0.4])
        assert np.max(np.abs(roots)) < 1.0
        assert model.stationarity_check([0.5, 0.4])

    def test_linear_without_coefficient_noise(self):
        """Test theta = 0.5 I with Q = 0."""
        model = RandomCoefficientLinearModel(np.zeros((2, 2)), np.eye(2))
        assert model.stationarity_check(0.5 * np.eye(2))
        assert not model.stationarity_check(1.1 * np.eye(2))

    def test_linear_coefficient_noise_shrinks_region(self):
        """Test that Q pushes theta = 0.99 I outside the region."""
        model = RandomCoefficientLinearModel(np.zeros((2, 2)), np.eye(2), 0.05 * np.eye(4))
        assert not model.stationarity_check(0.99 * np.eye(2))

    def test_non_stationary_theta_star_rejected(self):
        """Test construction-time validation."""
        with pytest.raises(ConfigurationError):
            AutoregressiveModel(1.2)


class TestLinearModel:
    """Test the random-coefficient covariance structure."""

    def test_isotropic_coefficient_covariance(self):
        """Test G(x) = (1 + 0.01 |x|^2) I for Cov(vec B) = 0.01 I."""
        model = RandomCoefficientLinearModel(np.zeros((2, 2)), np.eye(2), 0.01 * np.eye(4))
        x = np.array([3.0, 4.0])
        np.testing.assert_allclose(model.conditional_covariance(x), 1.25 * np.eye(2))

    def test_kronecker_moment_of_single_entry(self):
        """Test E[B (x) B] when only B[0, 1] is random."""
        cov = np.zeros((4, 4))
        cov[1, 1] = 1.0
        moment = kronecker_moment(cov, 2)
        # E[B01 B01] sits at row (0,0), column (1,1) of the Kronecker product.
        assert moment[0, 3] == 1.0
        assert np.count_nonzero(moment) == 1

    def test_noise_must_be_positive_definite(self):
        """Test rejection of a singular noise covariance."""
        with pytest.raises(ConfigurationError):
            RandomCoefficientLinearModel(np.zeros((2, 2)), np.zeros((2, 2)))


class TestRegistry:
    """Test model construction by kind."""

    def test_create_known_kind(self):
        """Test construction from a kind string."""
        model = create_model("ar_p", theta_star=[0.2])
        assert isinstance(model, AutoregressiveModel)
        assert model.dim == 1

    def test_unknown_kind(self):
        """Test that unknown kinds raise."""
        with pytest.raises(ConfigurationError):
            create_model("garch")

    def test_wrong_parameter_dimension(self):
        """Test dimension checks on theta."""
        with pytest.raises(ConfigurationError):
            AutoregressiveModel([0.1, 0.2]).llr_increment(0.5, 1.0, np.zeros(2))
