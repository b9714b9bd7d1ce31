"""Tests for posterior states, conjugate updates and simulated transitions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from allocation_planner.errors import DimensionMismatch
from allocation_planner.linalg import loewner_excess, pseudo_inverse, spd_solve
from allocation_planner.model import (
    ArmEffects,
    BatchData,
    ContextSet,
    EstimateSummary,
    LossFamily,
    ModelSpec,
    fit_batch,
    information_matrices,
)
from allocation_planner.posterior import (
    HorizonSpec,
    PosteriorState,
    information_gain,
    prior_state,
    rollout,
    simulate_transition,
    transition_root,
    update,
)


def random_summary(rng: np.random.Generator, dim: int, n: int = 50) -> EstimateSummary:
    a = rng.standard_normal((dim, dim))
    b = rng.standard_normal((dim, dim))
    return EstimateSummary(rng.standard_normal(dim), a @ a.T + np.eye(dim), b @ b.T + np.eye(dim), n)


def random_state(rng: np.random.Generator, dim: int) -> PosteriorState:
    a = rng.standard_normal((dim, dim))
    return PosteriorState(rng.standard_normal(dim), a @ a.T / dim + 0.5 * np.eye(dim), 0)


class TestPosteriorState:
    """Test cases for PosteriorState."""

    def test_round_trip_dict(self):
        """Test that to_dict/from_dict preserve the state."""
        state = PosteriorState(np.array([1.0, 2.0]), np.eye(2), 3)
        restored = PosteriorState.from_dict(state.to_dict())
        assert np.array_equal(restored.beta, state.beta)
        assert restored.epoch == 3

    def test_shape_mismatch_raises_error(self):
        """Test that a covariance of the wrong size raises DimensionMismatch."""
        with pytest.raises(DimensionMismatch):
            PosteriorState(np.zeros(2), np.eye(3))

    def test_non_finite_mean_raises_error(self):
        """Test that a NaN mean raises ValueError."""
        with pytest.raises(ValueError):
            PosteriorState(np.array([np.nan]), np.eye(1))


class TestUpdate:
    """Test cases for the conjugate update."""

    def test_scalar_formula(self):
        """Test that d = 1 matches the textbook normal-normal update."""
        state = PosteriorState(np.array([0.5]), np.array([[2.0]]), 0)
        obs = EstimateSummary(np.array([1.5]), np.array([[2.0]]), np.array([[4.0]]), 10)
        new = update(state, obs)
        precision = 1.0 / 2.0 + 10 * 2.0 * 2.0 / 4.0
        assert new.sigma[0, 0] == pytest.approx(1.0 / precision, abs=1e-10)
        assert new.beta[0] == pytest.approx((0.5 / 2.0 + 10 * 1.0 * 1.5) / precision, abs=1e-10)
        assert new.epoch == 1

    @pytest.mark.parametrize("dim", [1, 2, 3, 4])
    def test_matches_information_form(self, dim):
        """Test that the covariance form matches Σ'⁻¹ = Σ⁻¹ + G to 1e-10."""
        rng = np.random.default_rng(dim)
        state = random_state(rng, dim)
        obs = random_summary(rng, dim)
        gain = obs.n_units * obs.hessian @ np.linalg.inv(obs.grad_cov) @ obs.hessian
        precision = np.linalg.inv(state.sigma) + gain
        expected_sigma = spd_solve(precision, np.eye(dim))
        expected_beta = spd_solve(precision, np.linalg.solve(state.sigma, state.beta) + gain @ obs.theta_hat)
        new = update(state, obs)
        assert np.allclose(new.sigma, expected_sigma, atol=1e-10)
        assert np.allclose(new.beta, expected_beta, atol=1e-10)

    def test_stacked_kalman_form(self):
        """Test the update against a Kalman gain on stacked pseudo-observations."""
        rng = np.random.default_rng(11)
        state = random_state(rng, 3)
        obs = random_summary(rng, 3, n=20)
        # θ̂ ~ N(θ, (n H I⁻¹ H)⁻¹)
        obs_cov = np.linalg.inv(obs.n_units * obs.hessian @ np.linalg.inv(obs.grad_cov) @ obs.hessian)
        kalman = state.sigma @ np.linalg.inv(state.sigma + obs_cov)
        new = update(state, obs)
        assert np.allclose(new.beta, state.beta + kalman @ (obs.theta_hat - state.beta), atol=1e-10)
        assert np.allclose(new.sigma, state.sigma - kalman @ state.sigma, atol=1e-10)

    def test_zero_hessian_keeps_belief(self):
        """Test that an uninformative batch leaves (β, Σ) unchanged."""
        state = PosteriorState(np.array([1.0, -1.0]), np.eye(2), 2)
        obs = EstimateSummary(np.array([5.0, 5.0]), np.zeros((2, 2)), np.zeros((2, 2)), 10)
        new = update(state, obs)
        assert np.array_equal(new.beta, state.beta)
        assert np.array_equal(new.sigma, state.sigma)
        assert new.epoch == 3

    def test_unsampled_arm_is_untouched(self):
        """Test that an arm with no units keeps its prior marginal."""
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 3, 3)
        state = PosteriorState(np.array([0.1, 0.2, 0.3]), np.eye(3), 0)
        data = BatchData.from_rows([(0, 0, 1.0), (0, 0, 2.0), (0, 2, 0.5), (0, 2, 0.7)], epoch=0)
        new = update(state, fit_batch(model, ContextSet.single(1), data))
        assert new.beta[1] == pytest.approx(0.2)
        assert new.sigma[1, 1] == pytest.approx(1.0)

    def test_dimension_mismatch_raises_error(self):
        """Test that a summary of the wrong dimension raises DimensionMismatch."""
        state = PosteriorState(np.zeros(2), np.eye(2))
        with pytest.raises(DimensionMismatch):
            update(state, EstimateSummary(np.zeros(3), np.eye(3), np.eye(3), 5))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), dim=st.integers(1, 4))
    def test_covariance_shrinks(self, seed, dim):
        """Test that Σ_{t+1} ⪯ Σ_t after any update."""
        rng = np.random.default_rng(seed)
        state = random_state(rng, dim)
        new = update(state, random_summary(rng, dim))
        assert loewner_excess(new.sigma, state.sigma) <= 1e-10
        assert np.array_equal(new.sigma, new.sigma.T)


class TestSimulateTransition:
    """Test cases for simulate_transition and rollout."""

    def test_zero_noise_keeps_mean(self):
        """Test that z = 0 gives a zero mean increment."""
        rng = np.random.default_rng(0)
        state = random_state(rng, 3)
        h, i = np.eye(3), 2.0 * np.eye(3)
        new = simulate_transition(state, h, i, 10, np.zeros(3))
        assert np.array_equal(new.beta, state.beta)

    def test_covariance_matches_update(self):
        """Test that the simulated covariance equals the conjugate update's."""
        rng = np.random.default_rng(1)
        state = random_state(rng, 2)
        obs = random_summary(rng, 2)
        simulated = simulate_transition(state, obs.hessian, obs.grad_cov, obs.n_units, rng.standard_normal(2))
        assert np.allclose(simulated.sigma, update(state, obs).sigma, atol=1e-12)

    def test_scalar_increment(self):
        """Test that d = 1 moves β by z·sqrt(σ² - σ'²)."""
        state = PosteriorState(np.array([0.0]), np.array([[1.0]]), 0)
        new_sigma, root = transition_root(state.sigma, np.array([[2.0]]), np.array([[4.0]]), 4)
        assert new_sigma[0, 0] == pytest.approx(0.2)
        assert root[0, 0] == pytest.approx(np.sqrt(0.8))
        new = simulate_transition(state, np.array([[2.0]]), np.array([[4.0]]), 4, np.array([1.5]))
        assert new.beta[0] == pytest.approx(1.5 * np.sqrt(0.8))

    def test_singular_information_uses_pseudo_inverse(self):
        """Test that a rank-deficient I(p) still gives a finite transition."""
        state = PosteriorState(np.zeros(2), np.eye(2))
        h, i = np.diag([2.0, 0.0]), np.diag([4.0, 0.0])
        gain = information_gain(h, i, 10)
        assert np.allclose(gain, h @ pseudo_inverse(i) @ h * 10)
        new = simulate_transition(state, h, i, 10, np.ones(2))
        assert new.sigma[1, 1] == pytest.approx(1.0)
        assert new.beta[1] == pytest.approx(0.0, abs=1e-7)

    def test_wrong_noise_shape_raises_error(self):
        """Test that z of the wrong length raises DimensionMismatch."""
        with pytest.raises(DimensionMismatch):
            simulate_transition(PosteriorState(np.zeros(2), np.eye(2)), np.eye(2), np.eye(2), 1, np.zeros(3))

    def test_rollout_length_and_epochs(self):
        """Test that a rollout returns T - t + 1 states with increasing epochs."""
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 2, 2)
        horizon = HorizonSpec.constant(3, 20)
        ctx = ContextSet.single(3)
        state = PosteriorState(np.zeros(2), np.eye(2), 1)
        plan = [np.array([[0.5, 0.5]])] * 2
        traj = rollout(state, plan, model, ctx, horizon, np.ones((2, 2)))
        assert [s.epoch for s in traj] == [1, 2, 3]
        h, i = information_matrices(model, ctx, 1, plan[0], state.beta)
        assert np.allclose(traj[1].sigma, simulate_transition(state, h, i, 20, np.ones(2)).sigma)

    def test_rollout_plan_length_mismatch(self):
        """Test that a plan not covering the residual horizon raises DimensionMismatch."""
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 2, 2)
        with pytest.raises(DimensionMismatch):
            rollout(PosteriorState(np.zeros(2), np.eye(2)), [np.array([[0.5, 0.5]])], model,
                    ContextSet.single(3), HorizonSpec.constant(3, 5), np.zeros((3, 2)))


class TestPrior:
    """Test cases for HorizonSpec and prior_state."""

    def test_prior_scale(self):
        """Test that λ = c · mean(s²) / mean(n_t) with noise_scale given as variances."""
        horizon = HorizonSpec((100, 300))
        state = prior_state(2, horizon, noise_scale=np.array([1.0, 3.0]), c_prior=100.0)
        assert state.sigma[0, 0] == pytest.approx(100.0 * 2.0 / 200.0)
        assert np.array_equal(state.beta, np.zeros(2))

    def test_prior_scale_is_linear_in_variance(self):
        """Test that small reward variances give λ proportional to s², not s⁴."""
        state = prior_state(1, HorizonSpec.constant(3, 100), noise_scale=np.array([0.01, 0.03]), c_prior=100.0)
        assert state.sigma[0, 0] == pytest.approx(0.02)

    def test_empty_horizon_raises_error(self):
        """Test that an empty horizon raises ValueError."""
        with pytest.raises(ValueError):
            HorizonSpec(())

    def test_non_positive_batch_raises_error(self):
        """Test that a zero batch size raises ValueError."""
        with pytest.raises(ValueError):
            HorizonSpec((10, 0))
