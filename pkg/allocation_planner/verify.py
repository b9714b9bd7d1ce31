"""Monte Carlo checks of the posterior dynamics, the batch CLT and the planner's limit behavior.

Every check is deterministic given its seed and returns a JSON-ready report
``{check, params, metric, threshold, pass}``.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .baselines import dts_alloc
from .model import ArmEffects, ContextSet, LossFamily, ModelSpec, fit_rows, information_matrices
from .objectives import ObjectiveSpec, coverage_map
from .planner import OptimizerConfig, PlanningProblem, scenario_draws, solve_plan
from .posterior import HorizonSpec, PosteriorState, simulate_transition, transition_root
from .simulator import NoiseKind, NoiseSpec, sample_noise

logger = logging.getLogger(__name__)


def _report(check: str, params: dict[str, Any], metric: dict[str, Any], threshold: Any, passed: bool) -> dict[str, Any]:
    return {'check': check, 'params': params, 'metric': metric, 'threshold': threshold, 'pass': bool(passed)}


def _arm_model(noise_scale: np.ndarray) -> ModelSpec:
    noise_scale = np.asarray(noise_scale, dtype=float)
    return ModelSpec(ArmEffects(), LossFamily.SQUARED_ERROR, noise_scale, noise_scale.shape[0], noise_scale.shape[0])


def largest_remainder_counts(n: int, probs: np.ndarray) -> np.ndarray:
    """Integer counts summing to n, closest to n·probs (ties go to the lower index)."""
    target = n * np.asarray(probs, dtype=float)
    counts = np.floor(target).astype(int)
    short = n - int(counts.sum())
    if short > 0:
        order = np.argsort(-(target - counts), kind='stable')
        counts[order[:short]] += 1
    return counts


# Reparameterized transition

def check_reparam(
    dims: Sequence[int] = (1, 2, 4),
    seeds: Sequence[int] = (0,),
    num_draws: int = 100_000,
    tolerance: float = 0.02,
    batch_size: int = 50,
) -> dict[str, Any]:
    """Empirical covariance of β_{t+1} - β_t against Σ_t - Σ_{t+1}.

    Increments are z·(Σ_t - Σ_{t+1})^{1/2} for standard normal z; the first draw
    of every case is also pushed through ``simulate_transition`` to confirm the
    batched increments match it.
    """
    cases = []
    for dim, seed in itertools.product(dims, seeds):
        rng = np.random.default_rng([seed, dim])
        factor = rng.standard_normal((dim, dim))
        sigma = factor @ factor.T / dim + 0.5 * np.eye(dim)
        state = PosteriorState(rng.standard_normal(dim), sigma, 0)
        model = _arm_model(rng.uniform(0.5, 2.0, dim))
        alloc = rng.dirichlet(np.ones(dim))
        h, i = information_matrices(model, ContextSet.single(1), 0, alloc, state.beta)

        new_sigma, root = transition_root(state.sigma, h, i, batch_size)
        z = rng.standard_normal((num_draws, dim))
        increments = z @ root
        empirical = increments.T @ increments / num_draws
        drop = state.sigma - new_sigma
        deviation = float(np.linalg.norm(empirical - drop) / np.linalg.norm(drop))

        single = simulate_transition(state, h, i, batch_size, z[0])
        mismatch = float(np.max(np.abs((single.beta - state.beta) - increments[0])))
        cases.append({
            'dim': dim,
            'seed': seed,
            'relative_frobenius': deviation,
            'transition_mismatch': mismatch,
            'pass': deviation <= tolerance and mismatch <= 1e-10,
        })
        logger.info("Reparameterization d=%d seed=%d: relative error %.4f", dim, seed, deviation)

    return _report(
        'reparam',
        {'dims': list(dims), 'seeds': list(seeds), 'num_draws': num_draws, 'batch_size': batch_size},
        {'cases': cases, 'max_deviation': max(c['relative_frobenius'] for c in cases)},
        tolerance,
        all(c['pass'] for c in cases),
    )


# Sequential CLT

@dataclass(frozen=True)
class CltConfig:
    """Two-epoch experiment under the local scaling θ* = theta_base / √n.

    Args:
        batch_scales: Strictly increasing n; epoch t has multipliers[t]·n units
        multipliers: Batch size multipliers b_0, b_1
        theta_base: Scaled arm means, one per arm
        policy: 'ts_like' (softmax of standardized first-epoch means) or 'uniform'
        replications: Simulated experiments per n
        noise: Reward noise law
        noise_var: Reward variance s² (0 gives noiseless rewards)
        epsilon: Floor on every second-epoch arm probability
    """

    batch_scales: tuple[int, ...] = (100, 1_000, 10_000)
    multipliers: tuple[float, float] = (1.0, 1.0)
    theta_base: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    policy: str = 'ts_like'
    replications: int = 2000
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(NoiseKind.GUMBEL))
    noise_var: float = 1.0
    epsilon: float = 0.05
    terminal_tolerance: float = 0.05
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        scales = tuple(int(n) for n in self.batch_scales)
        if len(scales) < 2 or any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError(f"'batch_scales' must be strictly increasing, got {scales}")
        if self.policy not in ('ts_like', 'uniform'):
            raise ValueError(f"Unknown CLT policy '{self.policy}'")
        if self.noise_var < 0:
            raise ValueError("'noise_var' must be non-negative")
        object.__setattr__(self, 'batch_scales', scales)


def _clt_replication(cfg: CltConfig, n: int, replication: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One experiment: returns (Ψ - H_n θ*, H_n θ*, predicted covariance of Ψ)."""
    rng = np.random.default_rng([cfg.seed, n, replication])
    theta_star = np.asarray(cfg.theta_base, dtype=float) / np.sqrt(n)
    num_arms = theta_star.shape[0]
    eye = np.eye(num_arms)
    # unit noise scale; I(p) is linear in s² and rescaled below
    model = _arm_model(np.ones(num_arms))
    ctx = ContextSet.single(1)
    s_ref = np.sqrt(cfg.noise_var) if cfg.noise_var > 0 else 1.0

    def run_epoch(size: int, probs: np.ndarray):
        counts = largest_remainder_counts(size, probs)
        phi = np.repeat(eye, counts, axis=0)
        noise = sample_noise(cfg.noise, np.full(size, cfg.noise_var), rng)
        return counts, fit_rows(LossFamily.SQUARED_ERROR, phi, phi @ theta_star + noise)

    n0 = max(int(round(cfg.multipliers[0] * n)), num_arms)
    n1 = max(int(round(cfg.multipliers[1] * n)), num_arms)
    uniform = np.full(num_arms, 1.0 / num_arms)
    counts0, first = run_epoch(n0, uniform)

    if cfg.policy == 'uniform':
        probs = uniform
    else:
        score = first.theta_hat * np.sqrt(counts0) / s_ref
        weights = np.exp(score - score.max())
        probs = coverage_map(weights / weights.sum(), cfg.epsilon)

    counts1, second = run_epoch(n1, probs)
    realized = counts1 / n1
    h, i = information_matrices(model, ctx, 0, realized, theta_star)
    psi = second.hessian @ second.theta_hat
    predicted_mean = h @ theta_star
    return psi - predicted_mean, predicted_mean, cfg.noise_var * i / n1


def check_clt(cfg: CltConfig | None = None) -> dict[str, Any]:
    """Compare the second-epoch statistic Ψ = H_n θ̂ with its Gaussian-experiment law.

    Conditional on the realized second-epoch proportions q, Ψ is predicted to be
    N(H(q)θ*, I(q)/n_1). The mean and covariance errors are unstandardized, so
    they shrink like n^{-1/2} and n^{-1}; the terminal mean error is measured
    against the root-mean-square size of Ψ.
    """
    cfg = cfg or CltConfig()
    mean_errors, cov_errors, scales, standardized = [], [], [], []
    for n in cfg.batch_scales:
        with ThreadPoolExecutor(max_workers=cfg.threads) as executor:
            results = list(executor.map(lambda r: _clt_replication(cfg, n, r), range(cfg.replications)))
        diffs = np.stack([r[0] for r in results])
        means = np.stack([r[1] for r in results])
        predicted_cov = np.mean([r[2] for r in results], axis=0)

        mean_diff = diffs.mean(axis=0)
        empirical_cov = diffs.T @ diffs / cfg.replications - np.outer(mean_diff, mean_diff)
        mean_errors.append(float(np.linalg.norm(mean_diff)))
        cov_errors.append(float(np.linalg.norm(empirical_cov - predicted_cov)))
        scales.append(float(np.sqrt(np.mean(np.sum(means ** 2, axis=1)) + np.trace(predicted_cov))))
        sd = np.sqrt(np.diag(predicted_cov))
        standardized.append(np.divide(mean_diff, sd, out=np.zeros_like(mean_diff), where=sd > 0).tolist())
        logger.info("CLT n=%d: mean error %.3g, covariance error %.3g", n, mean_errors[-1], cov_errors[-1])

    monotone = all(b <= a for a, b in zip(mean_errors, mean_errors[1:])) and \
        all(b <= a for a, b in zip(cov_errors, cov_errors[1:]))
    terminal = mean_errors[-1] / scales[-1] if scales[-1] > 0 else 0.0
    rate_ratios = [
        {'observed': a / b if b > 0 else float('inf'), 'expected': float(np.sqrt(m / k))}
        for a, b, k, m in zip(mean_errors, mean_errors[1:], cfg.batch_scales, cfg.batch_scales[1:])
    ]
    params = asdict(cfg)
    params['noise'] = {'kind': str(cfg.noise.kind), 'df': cfg.noise.df}
    return _report(
        'clt',
        params,
        {
            'mean_errors': mean_errors,
            'cov_errors': cov_errors,
            'scales': scales,
            'terminal_ratio': terminal,
            'standardized_mean': standardized[-1],
            'rate_ratios': rate_ratios,
            'monotone': monotone,
        },
        {'terminal_ratio': cfg.terminal_tolerance},
        monotone and terminal <= cfg.terminal_tolerance,
    )


# Policy improvement over static allocations

def simplex_grid(num_arms: int, resolution: int) -> np.ndarray:
    """All allocations with entries in {0, 1/resolution, ..., 1}."""
    points = [
        combo for combo in itertools.product(range(resolution + 1), repeat=num_arms)
        if sum(combo) == resolution
    ]
    return np.array(points, dtype=float) / resolution


def improvement_instance(
    rng: np.random.Generator, num_arms: int = 3, num_epochs: int = 5, batch_size: int = 10,
) -> tuple[PosteriorState, ModelSpec, HorizonSpec, ContextSet]:
    """Seeded prior and noise levels for a K-arm experiment."""
    state = PosteriorState(rng.normal(0.0, 0.5, num_arms), np.diag(rng.uniform(0.5, 1.5, num_arms)), 0)
    model = _arm_model(rng.uniform(0.5, 2.0, num_arms))
    return state, model, HorizonSpec.constant(num_epochs, batch_size), ContextSet.single(num_epochs)


def compare_with_static_grid(
    state: PosteriorState,
    model: ModelSpec,
    horizon: HorizonSpec,
    ctx: ContextSet,
    opt: OptimizerConfig,
    resolution: int = 5,
    spec: ObjectiveSpec | None = None,
) -> dict[str, Any]:
    """RHO's planning value against the best static allocation on a simplex grid.

    Both are evaluated on the same scenario set; the standard error is that of
    the paired per-scenario difference.
    """
    spec = spec or ObjectiveSpec.simple()
    remaining = horizon.total_epochs - state.epoch
    plan = solve_plan(state, horizon, model, ctx, spec, opt)
    if model.num_arms == 1:
        return {'rho_value': 0.0, 'grid_value': 0.0, 'margin': 0.0, 'standard_error': 0.0, 'pass': True}

    scenarios = scenario_draws(opt.num_scenarios, remaining, state.dim, opt.seed, opt.qmc)
    problem = PlanningProblem(state, horizon, model, ctx, spec, scenarios)
    rho = problem.scenario_values(np.stack(plan.logits))

    best, best_point = None, None
    for point in simplex_grid(model.num_arms, resolution):
        logits = np.broadcast_to(np.log(np.maximum(point, 1e-12)), (remaining, ctx.num_contexts, model.num_arms))
        values = problem.scenario_values(np.array(logits))
        if best is None or values.mean() > best.mean():
            best, best_point = values, point

    diff = rho - best
    se = float(diff.std(ddof=1) / np.sqrt(diff.shape[0]))
    margin = float(diff.mean())
    return {
        'rho_value': float(rho.mean()),
        'grid_value': float(best.mean()),
        'grid_point': best_point.tolist(),
        'margin': margin,
        'standard_error': se,
        'pass': margin >= -3.0 * se,
    }


def check_policy_improvement(
    num_instances: int = 10,
    resolution: int = 5,
    num_arms: int = 3,
    num_epochs: int = 5,
    batch_size: int = 10,
    opt: OptimizerConfig | None = None,
    seed: int = 0,
) -> dict[str, Any]:
    """RHO's planning value is at least the best static grid allocation, up to 3 standard errors."""
    opt = opt or OptimizerConfig(num_scenarios=512, seed=seed)
    instances = []
    for idx in range(num_instances):
        rng = np.random.default_rng([seed, idx])
        state, model, horizon, ctx = improvement_instance(rng, num_arms, num_epochs, batch_size)
        result = compare_with_static_grid(state, model, horizon, ctx, opt, resolution)
        result['instance'] = idx
        instances.append(result)
        logger.info("Improvement instance %d: margin %.4g (se %.3g)", idx, result['margin'], result['standard_error'])

    return _report(
        'policy_improvement',
        {'num_instances': num_instances, 'resolution': resolution, 'num_arms': num_arms,
         'num_epochs': num_epochs, 'batch_size': batch_size, 'num_scenarios': opt.num_scenarios, 'seed': seed},
        {'instances': instances, 'min_margin': min(r['margin'] for r in instances)},
        '-3 standard errors',
        all(r['pass'] for r in instances),
    )


# Large residual budget limit

def dts_distance(
    state: PosteriorState,
    model: ModelSpec,
    budget: int,
    opt: OptimizerConfig,
    dts_draws: int = 100_000,
    seed: int = 0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """ℓ∞ distance between RHO's single-epoch allocation at residual budget n and π^DTS."""
    horizon = HorizonSpec((int(budget),))
    plan = solve_plan(state, horizon, model, ContextSet.single(1), ObjectiveSpec.simple(), opt)
    rho = plan.first[0]
    dts = dts_alloc(state, np.sqrt(model.noise_scale), dts_draws, np.random.default_rng(seed))
    return float(np.max(np.abs(rho - dts))), rho, dts


def distances_shrink(distances: Sequence[float], tolerance: float, slack: float = 0.0) -> bool:
    """Final distance within ``tolerance``, strictly below the first, and every step down (up to ``slack``)."""
    if not distances:
        return False
    steps_ok = all(b < a + slack for a, b in zip(distances, distances[1:]))
    return distances[-1] <= tolerance and distances[-1] < distances[0] and steps_ok


def check_dts_limit(
    num_states: int = 5,
    budgets: Sequence[int] = (1_000, 10_000, 1_000_000),
    num_arms: int = 3,
    tolerance: float = 0.05,
    opt: OptimizerConfig | None = None,
    dts_draws: int = 100_000,
    seed: int = 0,
    slack: float = 0.0,
) -> dict[str, Any]:
    """RHO's first allocation approaches density Thompson sampling as the residual budget grows.

    Each state passes when the distance shrinks at every budget step (up to
    ``slack``), ends strictly below its first value and within ``tolerance``.
    """
    opt = opt or OptimizerConfig(learning_rate=0.05, num_steps=300, num_scenarios=8192, seed=seed)
    states = []
    for idx in range(num_states):
        rng = np.random.default_rng([seed, idx])
        state = PosteriorState(rng.normal(0.0, 0.5, num_arms), np.diag(rng.uniform(0.5, 1.5, num_arms)), 0)
        model = _arm_model(rng.uniform(0.5, 2.0, num_arms))
        distances = []
        for budget in budgets:
            distance, rho, dts = dts_distance(state, model, budget, opt, dts_draws, seed)
            distances.append(distance)
        states.append({
            'state': idx,
            'distances': distances,
            'rho': rho.tolist(),
            'dts': dts.tolist(),
            'pass': distances_shrink(distances, tolerance, slack),
        })
        logger.info("DTS limit state %d: distances %s", idx, ", ".join(f"{d:.4f}" for d in distances))

    return _report(
        'dts_limit',
        {'num_states': num_states, 'budgets': [int(b) for b in budgets], 'num_arms': num_arms,
         'num_scenarios': opt.num_scenarios, 'dts_draws': dts_draws, 'seed': seed, 'slack': slack},
        {'states': states, 'max_final_distance': max(s['distances'][-1] for s in states)},
        tolerance,
        all(s['pass'] for s in states),
    )


def run_all(seed: int = 0, quick: bool = False) -> list[dict[str, Any]]:
    """Run every check; ``quick`` shrinks draw counts for smoke runs."""
    if quick:
        return [
            check_reparam(num_draws=20_000, tolerance=0.05),
            check_clt(CltConfig(batch_scales=(100, 1_000), replications=200, seed=seed, terminal_tolerance=0.1)),
            check_policy_improvement(
                num_instances=2, opt=OptimizerConfig(num_steps=50, num_scenarios=128, seed=seed), seed=seed,
            ),
            check_dts_limit(
                num_states=1, budgets=(1_000, 1_000_000), tolerance=0.1, dts_draws=20_000,
                opt=OptimizerConfig(learning_rate=0.05, num_steps=150, num_scenarios=2048, seed=seed), seed=seed,
            ),
        ]
    return [
        check_reparam(seeds=(seed,)),
        check_clt(CltConfig(seed=seed)),
        check_policy_improvement(seed=seed),
        check_dts_limit(seed=seed),
    ]
