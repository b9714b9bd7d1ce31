"""Tests for the Uniform, TS, Top-Two TS and Density TS baselines."""

import numpy as np
import pytest
from scipy import integrate, stats

from allocation_planner.baselines import (
    BaselineSpec,
    dts_alloc,
    dts_index,
    dts_log_index_bounds,
    ts_assign,
    ttts_assign,
    uniform_alloc,
)
from allocation_planner.errors import DegeneratePosterior
from allocation_planner.model import ArmEffects, ContextSet, LossFamily, ModelSpec
from allocation_planner.posterior import PosteriorState


@pytest.fixture
def arm_model():
    return ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 3, 3)


class TestUniform:
    """Test cases for uniform_alloc."""

    def test_rows_are_uniform(self):
        """Test that every row is 1/K."""
        assert np.allclose(uniform_alloc(4, 2), 0.25)
        assert uniform_alloc(4, 2).shape == (2, 4)


class TestThompsonSampling:
    """Test cases for ts_assign and ttts_assign."""

    def test_confident_posterior_picks_leader(self, arm_model):
        """Test that a sharp posterior sends every unit to its best arm."""
        state = PosteriorState(np.array([5.0, 0.0, 0.0]), 0.01 * np.eye(3))
        arms = ts_assign(state, arm_model, ContextSet.single(1), np.zeros(500, dtype=int), np.random.default_rng(0))
        assert np.all(arms == 0)

    def test_ts_frequencies_match_posterior(self, arm_model):
        """Test that exchangeable arms get roughly equal shares."""
        state = PosteriorState(np.zeros(3), np.eye(3))
        arms = ts_assign(state, arm_model, ContextSet.single(1), np.zeros(9000, dtype=int), np.random.default_rng(1))
        shares = np.bincount(arms, minlength=3) / 9000
        assert np.allclose(shares, 1 / 3, atol=0.03)

    def test_two_arm_ts_matches_normal_cdf(self):
        """Test that TS picks arm 1 with probability Φ((β₁ - β₀) / sd(θ₁ - θ₀)) under a correlated posterior."""
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 2, 2)
        sigma = np.array([[1.0, 0.3], [0.3, 0.5]])
        state = PosteriorState(np.array([0.0, 0.3]), sigma)
        arms = ts_assign(state, model, ContextSet.single(1), np.zeros(20_000, dtype=int), np.random.default_rng(5))
        expected = stats.norm.cdf(0.3 / np.sqrt(sigma[0, 0] + sigma[1, 1] - 2 * sigma[0, 1]))
        assert np.mean(arms == 1) == pytest.approx(expected, abs=0.015)

    def test_top_two_with_beta_one_is_ts(self, arm_model):
        """Test that β = 1 reproduces TS unit for unit under matched seeds."""
        state = PosteriorState(np.array([0.2, 0.1, 0.0]), np.eye(3))
        contexts = np.zeros(10_000, dtype=int)
        ts = ts_assign(state, arm_model, ContextSet.single(1), contexts, np.random.default_rng(7))
        ttts = ttts_assign(state, arm_model, ContextSet.single(1), contexts, 1.0, np.random.default_rng(7))
        assert np.array_equal(ts, ttts.arms)
        assert ttts.fallbacks == 0

    def test_challengers_differ_from_leader(self, arm_model):
        """Test that resampled units end on an arm other than their TS leader."""
        state = PosteriorState(np.zeros(3), np.eye(3))
        contexts = np.zeros(2000, dtype=int)
        leaders = ts_assign(state, arm_model, ContextSet.single(1), contexts, np.random.default_rng(3))
        result = ttts_assign(state, arm_model, ContextSet.single(1), contexts, 1e-9, np.random.default_rng(3))
        assert result.fallbacks == 0
        assert np.all(result.arms != leaders)

    def test_resample_cap_falls_back_to_leader(self, arm_model):
        """Test that an unreachable challenger keeps the leader and counts a fallback."""
        state = PosteriorState(np.array([50.0, 0.0, 0.0]), 1e-4 * np.eye(3))
        result = ttts_assign(state, arm_model, ContextSet.single(1), np.zeros(20, dtype=int), 1e-9,
                             np.random.default_rng(0), resample_cap=3)
        assert result.fallbacks == 20
        assert np.all(result.arms == 0)

    def test_single_arm(self):
        """Test that K = 1 assigns arm 0 to everyone."""
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 1, 1)
        state = PosteriorState(np.zeros(1), np.eye(1))
        arms = ts_assign(state, model, ContextSet.single(1), np.zeros(5, dtype=int), np.random.default_rng(0))
        assert np.array_equal(arms, np.zeros(5))


class TestDensityTS:
    """Test cases for dts_alloc and its index bounds."""

    def test_allocation_is_probability_vector(self):
        """Test that DTS allocations are positive and sum to 1."""
        state = PosteriorState(np.array([0.3, 0.1, -0.2]), np.diag([0.5, 1.0, 0.2]))
        alloc = dts_alloc(state, np.ones(3), num_draws=20_000, rng=np.random.default_rng(0))
        assert np.all(alloc > 0)
        assert alloc.sum() == pytest.approx(1.0)

    def test_exchangeable_arms_are_uniform(self):
        """Test that identical marginals give near-uniform allocation."""
        state = PosteriorState(np.zeros(3), np.eye(3))
        alloc = dts_alloc(state, np.ones(3), num_draws=100_000, rng=np.random.default_rng(1))
        assert np.allclose(alloc, 1 / 3, atol=0.01)

    def test_noisier_arm_gets_more(self):
        """Test that the index scales with the arm's noise standard deviation."""
        state = PosteriorState(np.zeros(2), np.eye(2))
        index = dts_index(state, np.array([1.0, 2.0]), num_draws=50_000, rng=np.random.default_rng(2))
        assert index[1] / index[0] == pytest.approx(2.0, rel=0.05)

    def test_two_arm_allocation_matches_quadrature(self):
        """Test two-arm DTS against the index integrated numerically over the rival arm."""
        mu, sd, noise = np.array([0.2, -0.1]), np.array([0.5, 0.8]), np.array([1.0, 2.0])
        state = PosteriorState(mu, np.diag(sd ** 2))

        def index(a):
            rival = 1 - a
            density, _ = integrate.quad(
                lambda t: stats.norm.pdf(t, mu[a], sd[a]) * stats.norm.pdf(t, mu[rival], sd[rival]),
                -np.inf, np.inf,
            )
            return noise[a] * np.sqrt(density)

        expected = np.array([index(0), index(1)])
        alloc = dts_alloc(state, noise, num_draws=200_000, rng=np.random.default_rng(6))
        assert np.allclose(alloc, expected / expected.sum(), atol=0.01)

    def test_zero_variance_raises_error(self):
        """Test that a zero posterior standard deviation raises DegeneratePosterior."""
        state = PosteriorState(np.zeros(2), np.diag([1.0, 0.0]))
        with pytest.raises(DegeneratePosterior):
            dts_alloc(state, np.ones(2))

    def test_single_arm(self):
        """Test that one arm gets all the mass."""
        assert np.array_equal(dts_alloc(PosteriorState(np.zeros(1), np.eye(1)), np.ones(1)), [1.0])

    def test_log_index_bounds_are_ordered(self):
        """Test that the lower bound never exceeds the upper bound and the top two share it."""
        mu = np.array([1.0, 0.8, 0.0, -0.5])
        sigma = np.array([0.1, 0.2, 0.15, 0.3])
        lower, upper = dts_log_index_bounds(mu, sigma)
        assert np.all(lower <= upper + 1e-12)
        assert lower[0] == lower[1] == pytest.approx(-(0.2 ** 2) / (2 * (0.01 + 0.04)))

    def test_log_index_tracks_bounds(self):
        """Test that the Monte Carlo log index lies near the bounds for a small posterior."""
        mu = np.array([1.0, 0.5, 0.0])
        sigma = np.array([0.2, 0.2, 0.2])
        state = PosteriorState(mu, np.diag(sigma ** 2))
        log_index = 2 * np.log(dts_index(state, np.ones(3), num_draws=200_000, rng=np.random.default_rng(4)))
        lower, upper = dts_log_index_bounds(mu, sigma)
        # bounds hold up to terms logarithmic in σ
        slack = 2 * abs(np.log(sigma.min())) + 2
        assert np.all(log_index >= lower - slack)
        assert np.all(log_index <= upper + slack)


class TestBaselineSpec:
    """Test cases for BaselineSpec."""

    def test_from_dict(self):
        """Test that unspecified fields take defaults."""
        spec = BaselineSpec.from_dict({'kind': 'ttts', 'beta_param': 0.5})
        assert spec.kind == 'ttts'
        assert spec.beta_param == 0.5

    def test_invalid_beta_raises_error(self):
        """Test that β outside (0, 1] raises ValueError."""
        with pytest.raises(ValueError):
            BaselineSpec('ttts', beta_param=0.0)

    def test_unknown_kind_raises_error(self):
        """Test that an unknown kind raises ValueError."""
        with pytest.raises(ValueError):
            BaselineSpec('epsilon_greedy')
