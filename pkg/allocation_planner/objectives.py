"""Planning objectives, realized regrets, final decisions and allocation constraints.

The planning value is written once as a graph over ``tape`` variables. The
planner feeds it differentiable rollouts of N scenarios; ``planning_value``
feeds it one recorded trajectory as constants, so both paths share a single
definition of every term.
"""

import copy
import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Sequence

import numpy as np

from . import tape as tp
from .config import BUDGET_PENALTY
from .errors import DimensionMismatch, InfeasibleConstraint
from .model import ContextSet, LossFamily, ModelSpec, mean_reward_table
from .posterior import HorizonSpec, PosteriorState

logger = logging.getLogger(__name__)


class TermKind(StrEnum):
    SIMPLE_REGRET = "simple_regret"
    CUMULATIVE_REGRET = "cumulative_regret"
    POLICY_REGRET = "policy_regret"
    TOPK_SUM = "topk_sum"


class ConstraintKind(StrEnum):
    COVERAGE = "coverage"
    BUDGET = "budget"


@dataclass(frozen=True)
class ObjectiveTerm:
    kind: TermKind
    weight: float = 1.0
    k: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'kind', TermKind(self.kind))
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValueError(f"Term weight must be finite and non-negative, got {self.weight}")
        if self.kind == TermKind.TOPK_SUM and self.k < 1:
            raise ValueError(f"TopKSum needs k >= 1, got {self.k}")


@dataclass
class Constraint:
    """Coverage(ε) or Budget(costs, bound); ``remaining`` is the budget slack B_t."""

    kind: ConstraintKind
    epsilon: float = 0.0
    costs: np.ndarray | None = None
    bound: float = 0.0
    remaining: float | None = None

    def __post_init__(self):
        self.kind = ConstraintKind(self.kind)
        if self.kind == ConstraintKind.COVERAGE:
            if not 0.0 <= self.epsilon <= 1.0:
                raise ValueError(f"Coverage epsilon must be in [0, 1], got {self.epsilon}")
        else:
            if self.costs is None:
                raise ValueError("Budget constraint needs a cost vector")
            self.costs = np.asarray(self.costs, dtype=float)
            if self.bound < 0:
                raise ValueError(f"Budget bound must be non-negative, got {self.bound}")
            if self.remaining is None:
                self.remaining = float(self.bound)

    @classmethod
    def coverage(cls, epsilon: float) -> "Constraint":
        return cls(ConstraintKind.COVERAGE, epsilon=epsilon)

    @classmethod
    def budget(cls, costs: Sequence[float], bound: float) -> "Constraint":
        return cls(ConstraintKind.BUDGET, costs=np.asarray(costs, dtype=float), bound=float(bound))


@dataclass
class ObjectiveSpec:
    """Weighted sum of objective terms plus the constraints every plan must satisfy."""

    terms: list[ObjectiveTerm]
    constraints: list[Constraint] = field(default_factory=list)
    penalty_weight: float = BUDGET_PENALTY

    def __post_init__(self):
        if not self.terms:
            raise ValueError("ObjectiveSpec needs at least one term")

    @classmethod
    def simple(cls) -> "ObjectiveSpec":
        return cls([ObjectiveTerm(TermKind.SIMPLE_REGRET)])

    @classmethod
    def from_unit_weights(cls, n_within: float, n_post: float, sum_n: float) -> "ObjectiveSpec":
        """Weight within-experiment and post-experiment rewards by the number of units they reach.

        The cumulative term already sums n_t rewards per epoch, so it is scaled
        by n_within / Σn_t; the terminal term is weighted by n_post.
        """
        if sum_n <= 0:
            raise ValueError("'sum_n' must be positive")
        return cls([
            ObjectiveTerm(TermKind.CUMULATIVE_REGRET, n_within / sum_n),
            ObjectiveTerm(TermKind.SIMPLE_REGRET, float(n_post)),
        ])

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ObjectiveSpec":
        """Parse ``{terms: [{kind, weight, k}], constraints: [{kind, ...}]}``."""
        terms = [
            ObjectiveTerm(t['kind'], float(t.get('weight', 1.0)), int(t.get('k', 1)))
            for t in data.get('terms', [{'kind': 'simple_regret'}])
        ]
        constraints = []
        for c in data.get('constraints', []) or []:
            kind = ConstraintKind(c['kind'])
            if kind == ConstraintKind.COVERAGE:
                constraints.append(Constraint.coverage(float(c['epsilon'])))
            else:
                constraints.append(Constraint.budget(c['costs'], float(c['bound'])))
        return cls(terms, constraints, float(data.get('penalty_weight', BUDGET_PENALTY)))

    def check_arms(self, num_arms: int) -> None:
        for term in self.terms:
            if term.kind == TermKind.TOPK_SUM and term.k > num_arms:
                raise ValueError(f"TopKSum k={term.k} exceeds the number of arms {num_arms}")
        for c in self.constraints:
            if c.kind == ConstraintKind.BUDGET and c.costs.shape != (num_arms,):
                raise DimensionMismatch(f"Budget costs have shape {c.costs.shape}, expected ({num_arms},)")

    @property
    def coverage_epsilon(self) -> float:
        return max((c.epsilon for c in self.constraints if c.kind == ConstraintKind.COVERAGE), default=0.0)

    @property
    def budget(self) -> Constraint | None:
        return next((c for c in self.constraints if c.kind == ConstraintKind.BUDGET), None)

    def active(self, kind: TermKind) -> ObjectiveTerm | None:
        return next((t for t in self.terms if t.kind == kind and t.weight > 0), None)

    def fresh(self) -> "ObjectiveSpec":
        """Deep copy with every budget slack reset to its bound."""
        spec = copy.deepcopy(self)
        for c in spec.constraints:
            if c.kind == ConstraintKind.BUDGET:
                c.remaining = float(c.bound)
        return spec


def top_k_sum(values: np.ndarray, k: int) -> float:
    """Sum of the k largest entries."""
    values = np.asarray(values, dtype=float)
    return float(np.sort(values)[::-1][:k].sum())


# ---------------------------------------------------------------------------
# Planning graph
# ---------------------------------------------------------------------------

def reward_graph(beta: tp.Var, features: np.ndarray, family: LossFamily) -> tp.Var:
    """Expected unit rewards for each scenario, (N, d) -> (N, C, K)."""
    if family == LossFamily.SQUARED_ERROR:
        return tp.einsum('nd,ckd->nck', beta, tp.const(features.sum(axis=2)))
    eta = tp.einsum('nd,ckmd->nckm', beta, tp.const(features))
    ones = tp.const(np.ones(features.shape[2]))
    return tp.einsum('nckm,m->nck', tp.sigmoid(eta), ones)


def objective_graph(
    betas: Sequence[tp.Var],
    probs: Sequence[tp.Var],
    spec: ObjectiveSpec,
    features: np.ndarray,
    family: LossFamily,
    ctx: ContextSet,
    horizon: HorizonSpec,
    start_epoch: int,
) -> tp.Var:
    """Per-scenario planning value, shape (N,).

    Args:
        betas: Posterior means β_t..β_T, each (N, d)
        probs: Allocations for epochs t..T-1, each (C, K)
        spec: Objective terms
        features: (C, K, m, d) feature tensor of the planning model
        family: Loss family of the planning model
        ctx: Context set
        horizon: Batch sizes and post-experiment population
        start_epoch: Epoch t of betas[0]
    """
    population = ctx.population_weights if horizon.population_weights is None else horizon.population_weights
    population = tp.const(population)
    terminal = reward_graph(betas[-1], features, family)
    total = None
    for term in spec.terms:
        if term.kind == TermKind.SIMPLE_REGRET:
            value = tp.max_last(tp.einsum('c,nck->nk', population, terminal))
        elif term.kind == TermKind.POLICY_REGRET:
            value = tp.einsum('c,nc->n', population, tp.max_last(terminal))
        elif term.kind == TermKind.TOPK_SUM:
            value = tp.topk_sum_last(tp.einsum('c,nck->nk', population, terminal), term.k)
        else:
            value = None
            for s, p in enumerate(probs):
                epoch = start_epoch + s
                rewards = reward_graph(betas[s], features, family)
                weights = tp.const(ctx.weights_per_epoch[epoch])
                step = tp.scale(tp.einsum('c,ck,nck->n', weights, p, rewards), float(horizon.batch_sizes[epoch]))
                value = step if value is None else tp.add(value, step)
            if value is None:
                value = tp.const(np.zeros(betas[-1].shape[0]))
        weighted = tp.scale(value, term.weight)
        total = weighted if total is None else tp.add(total, weighted)
    return total


def budget_penalty_graph(
    probs: Sequence[tp.Var],
    spec: ObjectiveSpec,
    ctx: ContextSet,
    horizon: HorizonSpec,
    start_epoch: int,
) -> tp.Var | None:
    """λ_pen Σ_s max(0, cost_s - B_s)² along the plan, with B_s the running slack."""
    budget = spec.budget
    if budget is None:
        return None
    costs = tp.const(budget.costs)
    spent = tp.const(0.0)
    penalty = None
    for s, p in enumerate(probs):
        epoch = start_epoch + s
        cost = tp.scale(
            tp.einsum('c,ck,k->', tp.const(ctx.weights_per_epoch[epoch]), p, costs),
            float(horizon.batch_sizes[epoch]),
        )
        excess = tp.relu_square(tp.sub(cost, tp.sub(tp.const(budget.remaining), spent)))
        penalty = excess if penalty is None else tp.add(penalty, excess)
        spent = tp.add(spent, cost)
    return tp.scale(penalty, spec.penalty_weight)


def planning_value(
    traj: Sequence[PosteriorState],
    plan: Sequence[np.ndarray],
    spec: ObjectiveSpec,
    model: ModelSpec,
    ctx: ContextSet,
    horizon: HorizonSpec,
) -> float:
    """Planning value of one posterior trajectory under a plan (to maximize).

    The allocation-independent E[max r̄(θ)] constant of the simple regret is
    dropped, so the SimpleRegret term contributes max_a r̄_a(β_T).

    Raises:
        DimensionMismatch: If the trajectory and plan lengths disagree
    """
    if len(traj) != len(plan) + 1:
        raise DimensionMismatch(f"Trajectory of length {len(traj)} does not match a plan of {len(plan)} epochs")
    spec.check_arms(model.num_arms)
    start = traj[0].epoch
    betas = [tp.const(state.beta[None, :]) for state in traj]
    probs = [tp.const(np.broadcast_to(p, (ctx.num_contexts, model.num_arms))) for p in plan]
    features = model.feature_tensor(ctx)
    value = float(objective_graph(betas, probs, spec, features, model.loss_family, ctx, horizon, start).value[0])
    penalty = budget_penalty_graph(probs, spec, ctx, horizon, start)
    if penalty is not None:
        value -= float(penalty.value)
    return value


# ---------------------------------------------------------------------------
# Decisions and realized regret
# ---------------------------------------------------------------------------

def final_decision(state: PosteriorState, spec: ObjectiveSpec, model: ModelSpec, ctx: ContextSet) -> np.ndarray:
    """Terminal allocation (C, K) chosen from the posterior mean.

    TopKSum puts 1/k on the k arms with largest r̄; otherwise PolicyRegret picks
    the argmax per context; otherwise a point mass on argmax r̄. Ties go to the
    lowest index.
    """
    table = mean_reward_table(model, ctx, state.beta)
    arm_values = ctx.population_weights @ table
    decision = np.zeros((ctx.num_contexts, model.num_arms))

    topk = spec.active(TermKind.TOPK_SUM)
    if topk is not None:
        mask = tp.topk_mask(arm_values, topk.k)
        decision[:] = mask / topk.k
    elif spec.active(TermKind.POLICY_REGRET) is not None:
        decision[np.arange(ctx.num_contexts), np.argmax(table, axis=1)] = 1.0
    else:
        decision[:, int(np.argmax(arm_values))] = 1.0
    return decision


def chosen_arm(decision: np.ndarray, ctx: ContextSet) -> int:
    """Arm with the largest population share in a terminal allocation."""
    return int(np.argmax(ctx.population_weights @ np.atleast_2d(decision)))


def realized_regret(
    theta_star: np.ndarray,
    allocations: Sequence[np.ndarray],
    final: np.ndarray,
    model: ModelSpec,
    ctx: ContextSet,
    horizon: HorizonSpec,
    k: int = 1,
) -> dict[str, float]:
    """Ground-truth regrets of a sequence of allocations and a final decision.

    Args:
        theta_star: True parameter of ``model``
        allocations: (C, K) allocation per experiment epoch
        final: (C, K) terminal allocation
        model: True reward model
        ctx: Context set
        horizon: Batch sizes and post-experiment population
        k: Size of the selected set for the top-k regret

    Returns:
        Dict with 'simple', 'cumulative', 'policy' and 'topk' regret
    """
    table = mean_reward_table(model, ctx, theta_star)
    population = ctx.population_weights if horizon.population_weights is None else horizon.population_weights
    best_per_context = table.max(axis=1)

    cumulative = 0.0
    for epoch, alloc in enumerate(allocations):
        alloc = np.broadcast_to(alloc, table.shape)
        gaps = (alloc * (best_per_context[:, None] - table)).sum(axis=1)
        cumulative += horizon.batch_sizes[epoch] * float(ctx.weights_per_epoch[epoch] @ gaps)

    final = np.broadcast_to(final, table.shape)
    arm_values = population @ table
    deployed = float(population @ (final * table).sum(axis=1))
    selected_share = population @ final
    return {
        'simple': float(arm_values.max()) - deployed,
        'cumulative': cumulative,
        'policy': float(population @ best_per_context) - deployed,
        'topk': top_k_sum(arm_values, k) - k * float(selected_share @ arm_values),
    }


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

def coverage_map(alloc: np.ndarray, epsilon: float) -> np.ndarray:
    """p ← ε + (1 - Kε) p, row-wise."""
    alloc = np.asarray(alloc, dtype=float)
    num_arms = alloc.shape[-1]
    if epsilon * num_arms > 1.0 + 1e-12:
        raise InfeasibleConstraint(f"Coverage epsilon {epsilon} is infeasible for {num_arms} arms")
    return epsilon + (1.0 - num_arms * epsilon) * alloc


def unit_floor_cost(costs: np.ndarray, epsilon: float) -> float:
    """Cheapest per-unit cost of a row with every arm at ε or above."""
    costs = np.asarray(costs, dtype=float)
    return float(epsilon * costs.sum() + (1.0 - costs.shape[0] * epsilon) * costs.min())


def _cheapest_vertex(costs: np.ndarray, num_contexts: int, epsilon: float) -> np.ndarray:
    num_arms = costs.shape[0]
    vertex = np.full((num_contexts, num_arms), epsilon)
    vertex[:, int(np.argmin(costs))] += 1.0 - num_arms * epsilon
    return vertex


def apply_constraints(
    raw_alloc: np.ndarray,
    constraints: Sequence[Constraint],
    epoch: int,
    batch_size: int | None = None,
    context_weights: np.ndarray | None = None,
    penalty_weight: float = BUDGET_PENALTY,
    advance: bool = True,
    covered: bool = False,
    reserve: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Make one epoch's allocation feasible.

    Coverage is applied first. A violated budget is reported as the quadratic
    penalty and then repaired by mixing toward the cheapest coverage-feasible
    allocation, so every row keeps its ε floor. With ``advance`` the budget
    slack is reduced by the deployed cost.

    Args:
        raw_alloc: (C, K) rows on the simplex
        constraints: Active constraints
        epoch: Epoch index (diagnostics only)
        batch_size: n_t, required when a budget is present
        context_weights: μ_t, defaults to uniform over contexts
        penalty_weight: λ_pen
        advance: Whether to subtract the deployed cost from the budget slack
        covered: Rows already carry the coverage floor (the planner's ε-softmax
            output); the floor is then only used for the budget repair
        reserve: Slack held back for later epochs; the allocation may spend at
            most the remaining budget minus this amount

    Returns:
        (feasible allocation, penalty value)

    Raises:
        InfeasibleConstraint: If ε·K > 1 or the slack is below the cheapest achievable cost
    """
    alloc = np.atleast_2d(np.asarray(raw_alloc, dtype=float)).copy()
    num_contexts, num_arms = alloc.shape
    epsilon = 0.0
    for c in constraints:
        if c.kind == ConstraintKind.COVERAGE:
            epsilon = max(epsilon, c.epsilon)
    if epsilon > 0 and not covered:
        alloc = coverage_map(alloc, epsilon)
    elif epsilon * num_arms > 1.0 + 1e-12:
        raise InfeasibleConstraint(f"Coverage epsilon {epsilon} is infeasible for {num_arms} arms")

    penalty = 0.0
    for c in constraints:
        if c.kind != ConstraintKind.BUDGET:
            continue
        if batch_size is None:
            raise ValueError("A budget constraint needs the batch size")
        weights = np.full(num_contexts, 1.0 / num_contexts) if context_weights is None else context_weights
        cost = batch_size * float(weights @ alloc @ c.costs)
        vertex = _cheapest_vertex(c.costs, num_contexts, epsilon)
        floor = batch_size * float(weights @ vertex @ c.costs)
        available = c.remaining - reserve
        if available < floor - 1e-9 * max(1.0, floor):
            raise InfeasibleConstraint(
                f"Remaining budget {c.remaining:.6g} (reserve {reserve:.6g}) below the cheapest cost "
                f"{floor:.6g} at epoch {epoch}"
            )
        excess = cost - available
        if excess > 0:
            penalty += penalty_weight * excess ** 2
            mix = min(1.0, excess / (cost - floor)) if cost > floor else 1.0
            alloc = (1.0 - mix) * alloc + mix * vertex
            cost = batch_size * float(weights @ alloc @ c.costs)
            logger.debug("Budget repair at epoch %d: mixed %.4f toward the cheapest arm", epoch, mix)
        if advance:
            c.remaining = max(0.0, c.remaining - cost)
    return alloc, penalty
