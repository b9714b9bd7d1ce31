"""Tests for the residual horizon planner."""

import numpy as np
import pytest

from allocation_planner import planner as planner_module
from allocation_planner.errors import NonFiniteError
from allocation_planner.model import ArmEffects, ContextSet, EstimateSummary, LossFamily, MixedEffects, ModelSpec
from allocation_planner.objectives import Constraint, ObjectiveSpec, ObjectiveTerm, TermKind
from allocation_planner.planner import (
    Adam,
    AllocationPlan,
    OptimizerConfig,
    PlanningProblem,
    pathwise_gradient,
    rho_policy_step,
    scenario_draws,
    solve_plan,
)
from allocation_planner.posterior import HorizonSpec, PosteriorState, update


def arm_instance(seed: int, num_arms: int = 3, num_epochs: int = 4, batch_size: int = 20):
    rng = np.random.default_rng(seed)
    state = PosteriorState(rng.normal(0.0, 0.5, num_arms), np.diag(rng.uniform(0.5, 1.5, num_arms)), 0)
    model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, rng.uniform(0.5, 2.0, num_arms), num_arms, num_arms)
    return state, model, HorizonSpec.constant(num_epochs, batch_size), ContextSet.single(num_epochs)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


class TestScenarioDraws:
    """Test cases for scenario_draws."""

    def test_shape_and_determinism(self):
        """Test that draws are (N, R, d) and repeat for the same seed."""
        a = scenario_draws(64, 3, 2, seed=5)
        assert a.shape == (64, 3, 2)
        assert np.array_equal(a, scenario_draws(64, 3, 2, seed=5))
        assert not np.array_equal(a, scenario_draws(64, 3, 2, seed=6))

    def test_sobol_draws_are_balanced(self):
        """Test that scrambled Sobol normals have near-zero mean."""
        z = scenario_draws(1024, 1, 2, seed=0, qmc=True)
        assert np.all(np.abs(z.mean(axis=0)) < 0.02)

    def test_pseudo_random_fallback(self):
        """Test that qmc=False gives finite normal draws."""
        z = scenario_draws(100, 2, 3, seed=0, qmc=False)
        assert np.all(np.isfinite(z))


class TestPathwiseGradient:
    """Test cases for pathwise_gradient."""

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        """Test that reverse-mode gradients match central differences within 1e-4."""
        state, model, horizon, ctx = arm_instance(seed)
        spec = ObjectiveSpec.simple()
        z = scenario_draws(64, horizon.total_epochs, state.dim, seed=seed)
        problem = PlanningProblem(state, horizon, model, ctx, spec, z)
        logits = np.random.default_rng(100 + seed).normal(0.0, 0.5, (4, 1, 3))

        grad = pathwise_gradient(logits, state, horizon, model, ctx, spec, z)
        numeric = np.zeros_like(logits)
        h = 1e-5
        for idx in np.ndindex(logits.shape):
            up, down = logits.copy(), logits.copy()
            up[idx] += h
            down[idx] -= h
            numeric[idx] = (problem.value(up) - problem.value(down)) / (2 * h)
        assert relative_error(grad, numeric) <= 1e-4

    def test_contextual_mixed_objective(self):
        """Test the gradient of a cumulative plus policy objective on a contextual model."""
        ctx = ContextSet(np.array([[1.0, 0.5], [1.0, -0.5]]), np.full((3, 2), 0.5), np.array([0.5, 0.5]))
        model = ModelSpec.build(MixedEffects(), ctx, 2, np.array([1.0, 2.0]))
        state = PosteriorState(np.array([0.1, 0.2, -0.1, 0.3]), 0.5 * np.eye(4), 0)
        horizon = HorizonSpec.constant(3, 15)
        spec = ObjectiveSpec([ObjectiveTerm(TermKind.CUMULATIVE_REGRET, 0.01), ObjectiveTerm(TermKind.POLICY_REGRET)])
        z = scenario_draws(32, 3, 4, seed=1)
        problem = PlanningProblem(state, horizon, model, ctx, spec, z)
        logits = np.random.default_rng(3).normal(0.0, 0.5, (3, 2, 2))
        _, grad = problem.value_and_gradient(logits)
        numeric = np.zeros_like(logits)
        for idx in np.ndindex(logits.shape):
            up, down = logits.copy(), logits.copy()
            up[idx] += 1e-5
            down[idx] -= 1e-5
            numeric[idx] = (problem.value(up) - problem.value(down)) / 2e-5
        assert relative_error(grad, numeric) <= 1e-4

    def test_zero_weight_terms_have_zero_gradient(self):
        """Test that a zero-weight objective has an exactly zero gradient and adds nothing to another term."""
        state, model, horizon, ctx = arm_instance(1)
        z = scenario_draws(32, horizon.total_epochs, state.dim, seed=1)
        logits = np.random.default_rng(2).normal(0.0, 0.5, (4, 1, 3))
        silent = ObjectiveSpec([ObjectiveTerm(TermKind.SIMPLE_REGRET, 0.0)])
        assert np.all(pathwise_gradient(logits, state, horizon, model, ctx, silent, z) == 0.0)
        simple = pathwise_gradient(logits, state, horizon, model, ctx, ObjectiveSpec.simple(), z)
        padded = ObjectiveSpec([ObjectiveTerm(TermKind.SIMPLE_REGRET), ObjectiveTerm(TermKind.CUMULATIVE_REGRET, 0.0)])
        assert np.array_equal(pathwise_gradient(logits, state, horizon, model, ctx, padded, z), simple)

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient_is_orthogonal_to_logit_shift(self, seed):
        """Test that the directional derivative along the all-ones vector of every row vanishes."""
        state, model, horizon, ctx = arm_instance(seed)
        spec = ObjectiveSpec([ObjectiveTerm(TermKind.CUMULATIVE_REGRET, 0.05), ObjectiveTerm(TermKind.SIMPLE_REGRET)])
        z = scenario_draws(32, horizon.total_epochs, state.dim, seed=seed)
        logits = np.random.default_rng(10 + seed).normal(0.0, 1.0, (4, 1, 3))
        grad = pathwise_gradient(logits, state, horizon, model, ctx, spec, z)
        assert np.all(np.abs(grad.sum(axis=-1)) <= 1e-10)

    def test_non_finite_scenario_is_reported(self):
        """Test that a NaN scenario raises NonFiniteError with its index."""
        state, model, horizon, ctx = arm_instance(0)
        z = scenario_draws(16, horizon.total_epochs, state.dim, seed=0)
        z[5, 0, 0] = np.nan
        with pytest.raises(NonFiniteError) as excinfo:
            pathwise_gradient(np.zeros((4, 1, 3)), state, horizon, model, ctx, ObjectiveSpec.simple(), z)
        assert excinfo.value.scenario == 5


class TestSolvePlan:
    """Test cases for solve_plan and rho_policy_step."""

    @pytest.fixture
    def quick(self):
        return OptimizerConfig(num_steps=30, num_scenarios=64, seed=0)

    def test_plan_rows_on_simplex(self, quick):
        """Test that every planned allocation row is a probability vector."""
        state, model, horizon, ctx = arm_instance(1)
        plan = solve_plan(state, horizon, model, ctx, ObjectiveSpec.simple(), quick)
        assert len(plan.probs) == horizon.total_epochs
        for p in plan.probs:
            assert np.all(p >= 0)
            assert np.allclose(p.sum(axis=1), 1.0)

    def test_best_value_never_decreases(self, quick):
        """Test that the best-so-far history is non-decreasing and starts at uniform."""
        state, model, horizon, ctx = arm_instance(2)
        spec = ObjectiveSpec.simple()
        plan = solve_plan(state, horizon, model, ctx, spec, quick)
        assert all(b >= a for a, b in zip(plan.history, plan.history[1:]))
        z = scenario_draws(64, horizon.total_epochs, state.dim, seed=0)
        uniform = PlanningProblem(state, horizon, model, ctx, spec, z).value(np.zeros((4, 1, 3)))
        assert plan.history[0] == pytest.approx(uniform)

    def test_single_arm_is_trivial(self, quick):
        """Test that K = 1 returns the all-ones allocation without optimizing."""
        state = PosteriorState(np.zeros(1), np.eye(1))
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 1, 1)
        plan = solve_plan(state, HorizonSpec.constant(2, 5), model, ContextSet.single(2), ObjectiveSpec.simple(), quick)
        assert np.array_equal(plan.first, [[1.0]])
        assert plan.history == []

    def test_no_epochs_left_raises_error(self, quick):
        """Test that planning at t = T raises ValueError."""
        state, model, horizon, ctx = arm_instance(0)
        with pytest.raises(ValueError, match="No experiment epochs remain"):
            solve_plan(PosteriorState(state.beta, state.sigma, 4), horizon, model, ctx, ObjectiveSpec.simple(), quick)

    def test_coverage_floor_is_respected(self, quick):
        """Test that every planned probability is at least ε."""
        state, model, horizon, ctx = arm_instance(3)
        spec = ObjectiveSpec([ObjectiveTerm(TermKind.SIMPLE_REGRET)], [Constraint.coverage(0.1)])
        plan = solve_plan(state, horizon, model, ctx, spec, quick)
        assert min(p.min() for p in plan.probs) >= 0.1 - 1e-12

    def test_symmetric_arms_prefer_uniform(self):
        """Test that exchangeable arms value the uniform allocation above a tilt."""
        state = PosteriorState(np.zeros(2), np.eye(2))
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 2, 2)
        z = scenario_draws(64, 2, 2, seed=0)
        problem = PlanningProblem(state, HorizonSpec.constant(2, 10), model, ContextSet.single(2),
                                  ObjectiveSpec.simple(), z)
        values = [problem.value(np.array([[[0.0, shift]]] * 2)) for shift in (-0.5, 0.0, 0.5)]
        assert values[1] >= min(values[0], values[2]) - 1e-3

    @pytest.mark.parametrize("epsilon", [0.0, 0.05])
    def test_certain_cumulative_objective_is_greedy(self, epsilon):
        """Test that one epoch left with Σ = 0 puts all mass above the floor on the best arm."""
        state = PosteriorState(np.array([0.1, 0.5, 0.2]), np.zeros((3, 3)))
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 3, 3)
        constraints = [Constraint.coverage(epsilon)] if epsilon else []
        spec = ObjectiveSpec([ObjectiveTerm(TermKind.CUMULATIVE_REGRET)], constraints)
        plan = solve_plan(state, HorizonSpec.constant(1, 20), model, ContextSet.single(1), spec,
                          OptimizerConfig(num_steps=100, num_scenarios=8, seed=0))
        assert len(plan.probs) == 1
        assert np.allclose(plan.first[0], [epsilon, 1.0 - 2 * epsilon, epsilon], atol=0.01)

    def test_symmetric_arms_plan_near_uniform(self, monkeypatch):
        """Test that two exchangeable arms under arm-swapped scenarios plan within 0.05 of (0.5, 0.5)."""
        def mirrored(num_scenarios, num_epochs, dim, seed=0, qmc=True):
            z = scenario_draws(num_scenarios // 2, num_epochs, dim, seed, qmc)
            return np.concatenate([z, z[..., ::-1]])

        monkeypatch.setattr(planner_module, 'scenario_draws', mirrored)
        state = PosteriorState(np.zeros(2), np.eye(2))
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 2, 2)
        plan = solve_plan(state, HorizonSpec.constant(3, 10), model, ContextSet.single(3), ObjectiveSpec.simple(),
                          OptimizerConfig(num_steps=50, num_scenarios=128, seed=0))
        for p in plan.probs:
            assert np.max(np.abs(p - 0.5)) <= 0.05

    def test_resolve_after_evidence_moves_toward_best_arm(self, quick):
        """Test that re-planning after a batch favouring arm 2 puts more mass on arm 2."""
        model = ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, 1.0, 3, 3)
        horizon, ctx = HorizonSpec.constant(3, 20), ContextSet.single(3)
        spec = ObjectiveSpec([ObjectiveTerm(TermKind.CUMULATIVE_REGRET, 0.05), ObjectiveTerm(TermKind.SIMPLE_REGRET)])
        state = PosteriorState(np.zeros(3), np.eye(3), 0)
        before = solve_plan(state, horizon, model, ctx, spec, quick).first

        # uniform batch of 60 units: H = 2p, I = 4p s², gain n H I⁻¹ H = 20 per arm
        batch = EstimateSummary(np.array([0.0, 0.0, 1.0]), np.eye(3) * 2 / 3, np.eye(3) * 4 / 3, 60)
        after = solve_plan(update(state, batch), horizon, model, ctx, spec, quick).first
        assert int(np.argmax(after[0])) == 2
        assert after[0, 2] > before[0, 2]

    def test_policy_step_deploys_first_epoch(self, quick):
        """Test that rho_policy_step deploys the plan's first allocation."""
        state, model, horizon, ctx = arm_instance(4)
        deploy, plan = rho_policy_step(state, horizon, model, ctx, ObjectiveSpec.simple(), quick)
        assert np.array_equal(deploy, plan.first)

    def test_policy_step_at_horizon_returns_decision(self, quick):
        """Test that at t = T the final decision is returned with no plan."""
        state, model, horizon, ctx = arm_instance(4)
        done = PosteriorState(np.array([0.0, 1.0, 0.5]), state.sigma, 4)
        deploy, plan = rho_policy_step(done, horizon, model, ctx, ObjectiveSpec.simple(), quick)
        assert plan is None
        assert np.array_equal(deploy, [[0.0, 1.0, 0.0]])

    def test_policy_step_respects_budget(self, quick):
        """Test that the deployed allocation stays within the budget slack."""
        state, model, horizon, ctx = arm_instance(5)
        budget = Constraint.budget([1.0, 2.0, 4.0], 150.0)
        spec = ObjectiveSpec([ObjectiveTerm(TermKind.SIMPLE_REGRET)], [budget])
        deploy, _ = rho_policy_step(state, horizon, model, ctx, spec, quick)
        assert 20 * float(deploy[0] @ budget.costs) <= 150.0 + 1e-9
        assert budget.remaining < 150.0

    def test_policy_step_budget_keeps_coverage(self, quick):
        """Test that a tight budget repair still deploys at least ε on every arm.

        Three later epochs of 20 units each hold back 60 · 1.4 = 84, leaving 29 for now.
        """
        state, model, horizon, ctx = arm_instance(0)
        budget = Constraint.budget([1.0, 2.0, 4.0], 113.0)
        spec = ObjectiveSpec([ObjectiveTerm(TermKind.SIMPLE_REGRET)], [Constraint.coverage(0.1), budget],
                             penalty_weight=1e-6)
        deploy, plan = rho_policy_step(state, horizon, model, ctx, spec, quick)
        assert deploy.min() >= 0.1 - 1e-12
        assert 20 * float(deploy[0] @ budget.costs) <= 29.0 + 1e-9
        assert np.array_equal(plan.first, deploy)
        assert budget.remaining >= 84.0 - 1e-9


class TestOptimizerPieces:
    """Test cases for Adam, OptimizerConfig and AllocationPlan."""

    def test_adam_ascends(self):
        """Test that Adam moves parameters along the gradient."""
        adam = Adam(0.1, (0.9, 0.999), 1e-8)
        params = adam.step(np.zeros(2), np.array([1.0, -1.0]))
        assert params[0] > 0 > params[1]

    def test_invalid_learning_rate(self):
        """Test that a non-positive learning rate raises ValueError."""
        with pytest.raises(ValueError):
            OptimizerConfig(learning_rate=0.0)

    def test_plan_serialization(self):
        """Test that to_dict lists epochs from the start epoch."""
        plan = AllocationPlan.from_logits(np.zeros((2, 1, 2)), 0.0, start_epoch=3)
        rows = plan.to_dict()
        assert [r['epoch'] for r in rows] == [3, 4]
        assert rows[0]['probs'] == [[0.5, 0.5]]
