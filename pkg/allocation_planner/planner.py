"""Residual horizon optimization: plan static allocations for the remaining epochs.

At every epoch the planner fixes a set of standard normal scenarios, rolls the
posterior forward under softmax-parameterized allocations for all remaining
epochs, and maximizes the scenario-average planning value with Adam using
reverse-mode pathwise gradients. Only the first epoch of the plan is deployed.

The covariance path Σ_t → Σ_T does not depend on the scenario draws, so it is
computed once per evaluation; the N scenario means are carried as one (N, d)
matrix B_{s+1} = B_s + Z_s (Σ_s - Σ_{s+1})^{1/2}.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats

from . import tape as tp
from .config import (
    ADAM_BETAS,
    ADAM_EPS,
    LEARNING_RATE,
    NUM_SCENARIOS,
    NUM_STEPS,
    TOL_RANK,
    USE_QMC,
)
from .errors import DimensionMismatch, InfeasibleConstraint, NonFiniteError
from .model import ContextSet, ModelSpec, information_basis
from .objectives import (
    ObjectiveSpec,
    apply_constraints,
    budget_penalty_graph,
    final_decision,
    objective_graph,
    unit_floor_cost,
)
from .posterior import HorizonSpec, PosteriorState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam and scenario settings for one planning solve."""

    learning_rate: float = LEARNING_RATE
    adam_betas: tuple[float, float] = ADAM_BETAS
    adam_eps: float = ADAM_EPS
    num_steps: int = NUM_STEPS
    num_scenarios: int = NUM_SCENARIOS
    qmc: bool = USE_QMC
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"'learning_rate' must be positive, got {self.learning_rate}")
        if self.num_scenarios < 2:
            raise ValueError(f"'num_scenarios' must be at least 2, got {self.num_scenarios}")
        if self.num_steps < 0:
            raise ValueError(f"'num_steps' must be non-negative, got {self.num_steps}")

    @classmethod
    def from_dict(cls, data: dict[str, Any], seed: int = 0) -> "OptimizerConfig":
        betas = data.get('adam_betas', ADAM_BETAS)
        return cls(
            learning_rate=float(data.get('learning_rate', LEARNING_RATE)),
            adam_betas=(float(betas[0]), float(betas[1])),
            adam_eps=float(data.get('adam_eps', ADAM_EPS)),
            num_steps=int(data.get('num_steps', NUM_STEPS)),
            num_scenarios=int(data.get('num_scenarios', NUM_SCENARIOS)),
            qmc=bool(data.get('qmc', USE_QMC)),
            seed=int(data.get('seed', seed)),
        )


@dataclass
class AllocationPlan:
    """Allocation for each remaining epoch, (C, K) rows on the simplex.

    ``history`` holds the best-so-far scenario-average value after each Adam step.
    """

    probs: list[np.ndarray]
    logits: list[np.ndarray]
    start_epoch: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def first(self) -> np.ndarray:
        return self.probs[0]

    @classmethod
    def from_logits(cls, logits: np.ndarray, epsilon: float, start_epoch: int,
                    history: list[float] | None = None) -> "AllocationPlan":
        probs = [
            tp.affine(tp.softmax_rows(tp.const(block)), 1.0 - block.shape[-1] * epsilon, epsilon).value
            for block in logits
        ]
        return cls(probs, [np.array(block) for block in logits], start_epoch, list(history or []))

    def to_dict(self) -> list[dict[str, Any]]:
        return [
            {'epoch': self.start_epoch + s, 'contexts': list(range(p.shape[0])), 'probs': p.tolist()}
            for s, p in enumerate(self.probs)
        ]


class Adam:
    """Adam ascent on a single parameter array."""

    def __init__(self, learning_rate: float, betas: tuple[float, float], eps: float):
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params + self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def scenario_draws(num_scenarios: int, num_epochs: int, dim: int, seed: int = 0, qmc: bool = USE_QMC) -> np.ndarray:
    """Standard normal scenarios of shape (N, epochs, d).

    With ``qmc`` the draws are a scrambled Sobol sequence pushed through the
    inverse normal CDF; otherwise plain pseudo-random normals.
    """
    width = num_epochs * dim
    if width == 0:
        return np.zeros((num_scenarios, num_epochs, dim))
    if qmc:
        sampler = stats.qmc.Sobol(d=width, scramble=True, rng=np.random.default_rng(seed))
        with warnings.catch_warnings():
            # non power-of-two sample sizes only lose the balance property
            warnings.simplefilter('ignore', UserWarning)
            u = sampler.random(num_scenarios)
        z = stats.norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
    else:
        z = np.random.default_rng(seed).standard_normal((num_scenarios, width))
    return z.reshape(num_scenarios, num_epochs, dim)


class PlanningProblem:
    """Sample-average planning value over a fixed scenario set, with its gradient.

    Args:
        state: Posterior at the start of the residual horizon
        horizon: Batch sizes
        model: Planning model
        ctx: Context set
        spec: Objective and constraints
        scenarios: (N, T - t, d) standard normal draws
        tol_rank: Rank tolerance for I(p)†
    """

    def __init__(
        self,
        state: PosteriorState,
        horizon: HorizonSpec,
        model: ModelSpec,
        ctx: ContextSet,
        spec: ObjectiveSpec,
        scenarios: np.ndarray,
        tol_rank: float = TOL_RANK,
    ):
        self.state = state
        self.horizon = horizon
        self.model = model
        self.ctx = ctx
        self.spec = spec
        self.tol_rank = tol_rank
        self.remaining = horizon.total_epochs - state.epoch
        self.scenarios = np.asarray(scenarios, dtype=float)
        if self.scenarios.ndim != 3 or self.scenarios.shape[1:] != (self.remaining, state.dim):
            raise DimensionMismatch(
                f"Scenarios have shape {self.scenarios.shape}, expected (N, {self.remaining}, {state.dim})"
            )
        self.epsilon = spec.coverage_epsilon
        if self.epsilon * model.num_arms > 1.0 + 1e-12:
            raise InfeasibleConstraint(f"Coverage epsilon {self.epsilon} is infeasible for {model.num_arms} arms")
        # theta_ref is the planning-start posterior mean
        self.h_basis, self.i_basis = information_basis(model, ctx, state.beta)
        self.features = model.feature_tensor(ctx)

    def _graph(self, logits: np.ndarray) -> tuple[tp.Tape, list[tp.Var], tp.Var, tp.Var, list[tp.Var]]:
        tape = tp.Tape()
        logit_vars = [tape.variable(block) for block in logits]
        num_scenarios = self.scenarios.shape[0]
        num_arms = self.model.num_arms
        eye = tp.const(np.eye(self.state.dim))
        h_basis = tp.const(self.h_basis)
        i_basis = tp.const(self.i_basis)

        sigma = tp.const(self.state.sigma)
        beta = tp.const(np.tile(self.state.beta, (num_scenarios, 1)))
        betas, probs = [beta], []
        for s, logit in enumerate(logit_vars):
            epoch = self.state.epoch + s
            p = tp.affine(tp.softmax_rows(logit), 1.0 - num_arms * self.epsilon, self.epsilon)
            probs.append(p)
            weights = tp.const(self.ctx.weights_per_epoch[epoch])
            h = tp.symmetrize(tp.einsum('c,ck,ckij->ij', weights, p, h_basis))
            i = tp.symmetrize(tp.einsum('c,ck,ckij->ij', weights, p, i_basis))
            gain = tp.scale(tp.matmul(tp.matmul(h, tp.pinv_sym(i, self.tol_rank)), h), float(self.horizon.batch_sizes[epoch]))
            gain = tp.symmetrize(gain)
            new_sigma = tp.symmetrize(tp.matmul(tp.inv(tp.add(eye, tp.matmul(sigma, gain))), sigma))
            root = tp.psd_sqrt(tp.symmetrize(tp.sub(sigma, new_sigma)))
            beta = tp.add(beta, tp.matmul(tp.const(self.scenarios[:, s, :]), root))
            betas.append(beta)
            sigma = new_sigma

        per_scenario = objective_graph(
            betas, probs, self.spec, self.features, self.model.loss_family,
            self.ctx, self.horizon, self.state.epoch,
        )
        total = tp.mean(per_scenario)
        penalty = budget_penalty_graph(probs, self.spec, self.ctx, self.horizon, self.state.epoch)
        if penalty is not None:
            total = tp.sub(total, penalty)
        return tape, logit_vars, total, per_scenario, betas

    def value(self, logits: np.ndarray) -> float:
        _, _, total, per_scenario, _ = self._graph(logits)
        self._check_finite(per_scenario.value, total.value)
        return float(total.value)

    def scenario_values(self, logits: np.ndarray) -> np.ndarray:
        """Planning value of each scenario, net of the scenario-independent budget penalty."""
        _, _, total, per_scenario, _ = self._graph(logits)
        self._check_finite(per_scenario.value, total.value)
        values = np.asarray(per_scenario.value, dtype=float)
        return values - (values.mean() - float(total.value))

    def value_and_gradient(self, logits: np.ndarray) -> tuple[float, np.ndarray]:
        """Scenario-average value and its exact gradient with respect to the logits."""
        tape, logit_vars, total, per_scenario, betas = self._graph(logits)
        self._check_finite(per_scenario.value, total.value)
        grads = tape.gradient(total, logit_vars + betas[1:])
        grad = np.stack(grads[:len(logit_vars)])
        if not np.all(np.isfinite(grad)):
            bad_rows = [np.flatnonzero(~np.all(np.isfinite(g), axis=1)) for g in grads[len(logit_vars):]]
            bad = min((int(rows[0]) for rows in bad_rows if rows.size), default=None)
            raise NonFiniteError("Planning gradient is not finite", scenario=bad)
        return float(total.value), grad

    @staticmethod
    def _check_finite(per_scenario: np.ndarray, total: np.ndarray) -> None:
        bad = np.flatnonzero(~np.isfinite(per_scenario))
        if bad.size:
            raise NonFiniteError("Planning value is not finite", scenario=int(bad[0]))
        if not np.isfinite(total):
            raise NonFiniteError("Planning value is not finite")


def _problem(state, horizon, model, ctx, spec, opt: "OptimizerConfig", tol_rank: float) -> PlanningProblem:
    remaining = horizon.total_epochs - state.epoch
    scenarios = scenario_draws(opt.num_scenarios, remaining, state.dim, opt.seed, opt.qmc)
    return PlanningProblem(state, horizon, model, ctx, spec, scenarios, tol_rank)


def pathwise_gradient(
    logits: np.ndarray,
    state: PosteriorState,
    horizon: HorizonSpec,
    model: ModelSpec,
    ctx: ContextSet,
    spec: ObjectiveSpec,
    z_scenarios: np.ndarray,
    tol_rank: float = TOL_RANK,
) -> np.ndarray:
    """Reverse-mode gradient of the scenario-average planning value, shape (T - t, C, K).

    Raises:
        NonFiniteError: With the index of the first scenario whose value or
            adjoint is not finite
    """
    problem = PlanningProblem(state, horizon, model, ctx, spec, z_scenarios, tol_rank)
    _, grad = problem.value_and_gradient(np.asarray(logits, dtype=float))
    return grad


def solve_plan(
    state: PosteriorState,
    horizon: HorizonSpec,
    model: ModelSpec,
    ctx: ContextSet,
    spec: ObjectiveSpec,
    opt: OptimizerConfig | None = None,
    tol_rank: float = TOL_RANK,
) -> AllocationPlan:
    """Optimize a static allocation sequence for epochs t..T-1.

    Logits start at 0 (uniform allocation) and Adam runs for ``opt.num_steps``
    steps on a fixed scenario set. The best iterate seen is returned.

    Raises:
        ValueError: If no experiment epochs remain
        NonFiniteError: If the planning value or gradient becomes non-finite
    """
    opt = opt or OptimizerConfig()
    remaining = horizon.total_epochs - state.epoch
    if remaining < 1:
        raise ValueError(f"No experiment epochs remain at epoch {state.epoch}")
    spec.check_arms(model.num_arms)
    epsilon = spec.coverage_epsilon
    logits = np.zeros((remaining, ctx.num_contexts, model.num_arms))
    if model.num_arms == 1:
        return AllocationPlan.from_logits(logits, 0.0, state.epoch)

    problem = _problem(state, horizon, model, ctx, spec, opt, tol_rank)
    adam = Adam(opt.learning_rate, opt.adam_betas, opt.adam_eps)
    best_value, best_logits = -np.inf, logits
    history = []
    for step in range(opt.num_steps + 1):
        value, grad = problem.value_and_gradient(logits)
        if value > best_value:
            best_value, best_logits = value, logits
        history.append(best_value)
        logger.debug("Epoch %d step %d: value %.6g (best %.6g)", state.epoch, step, value, best_value)
        if step == opt.num_steps:
            break
        logits = adam.step(logits, grad)

    logger.info("Planned %d epochs from epoch %d: best value %.6g", remaining, state.epoch, best_value)
    return AllocationPlan.from_logits(best_logits, epsilon, state.epoch, history)


def rho_policy_step(
    state: PosteriorState,
    horizon: HorizonSpec,
    model: ModelSpec,
    ctx: ContextSet,
    spec: ObjectiveSpec,
    opt: OptimizerConfig | None = None,
    tol_rank: float = TOL_RANK,
) -> tuple[np.ndarray, AllocationPlan | None]:
    """Plan the residual horizon and return the allocation to deploy now.

    At t = T the experiment is over and the final decision is returned with no
    plan. A budget constraint is repaired on the deployed allocation, keeping
    the cheapest coverage-feasible cost of every later epoch in reserve, and its
    slack is reduced by the deployed cost.
    """
    if state.epoch >= horizon.total_epochs:
        return final_decision(state, spec, model, ctx), None

    plan = solve_plan(state, horizon, model, ctx, spec, opt, tol_rank)
    deploy = plan.first
    budget = spec.budget
    if budget is not None:
        later_units = float(sum(horizon.batch_sizes[state.epoch + 1:]))
        deploy, _ = apply_constraints(
            deploy, spec.constraints, state.epoch,
            batch_size=horizon.batch_sizes[state.epoch],
            context_weights=ctx.weights_per_epoch[state.epoch],
            penalty_weight=spec.penalty_weight,
            covered=True,
            reserve=later_units * unit_floor_cost(budget.costs, spec.coverage_epsilon),
        )
        plan.probs[0] = deploy
    return deploy, plan
