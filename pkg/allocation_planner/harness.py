"""Benchmark orchestration: episodes, replications, summaries, Pareto sweeps and quantile reports."""

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .baselines import BaselineSpec, dts_alloc, ts_assign, ttts_assign, uniform_alloc
from .config import (
    C_PRIOR_FACTOR,
    CSV_FLOAT_FORMAT,
    OUTPUT_DIR,
    QUANTILE_LEVELS,
    RUNS_COLUMNS,
    TIMINGS_COLUMNS,
)
from .errors import ConfigError, MissingBaseline
from .model import ArmEffects, ModelSpec, arm_means, fit_batch
from .objectives import ObjectiveSpec, TermKind, chosen_arm, final_decision, realized_regret
from .planner import OptimizerConfig, rho_policy_step
from .posterior import PosteriorState, prior_state, update
from .simulator import (
    Environment,
    NoiseSpec,
    RankingEnv,
    gen_asos_like,
    gen_linear_contextual,
    observe,
    ranking_environment,
    read_asos_csv,
    sample_arms,
    sample_contexts,
    synthetic_asos_instance,
)
from .validators import validate_bench_config

logger = logging.getLogger(__name__)


class PolicyKind(StrEnum):
    RHO = "rho"
    UNIFORM = "uniform"
    TS = "ts"
    TTTS = "ttts"
    DTS = "dts"


@dataclass
class PolicySpec:
    """One policy entry of a benchmark.

    Args:
        policy_id: Unique id used in every output file
        kind: Policy family
        model: Planning model, 'contextual' (the environment's model) or
            'noncontextual' (arm effects only)
        objective: Objective and constraints; the final decision rule of every policy
        optimizer: Planner settings (RHO only)
        baseline: Baseline settings (TS, TTTS, DTS)
    """

    policy_id: str
    kind: PolicyKind
    model: str = "contextual"
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec.simple)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    baseline: BaselineSpec | None = None

    def __post_init__(self):
        self.kind = PolicyKind(self.kind)
        if self.kind == PolicyKind.DTS:
            # the density index is defined for independent arm posteriors only
            self.model = "noncontextual"
        if self.baseline is None and self.kind in (PolicyKind.TS, PolicyKind.TTTS, PolicyKind.DTS):
            self.baseline = BaselineSpec(self.kind)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PolicySpec":
        kind = PolicyKind(data['kind'])
        baseline = None
        if kind in (PolicyKind.TS, PolicyKind.TTTS, PolicyKind.DTS):
            baseline = BaselineSpec.from_dict({**data, 'kind': str(kind)})
        return cls(
            policy_id=str(data.get('id', kind)),
            kind=kind,
            model=data.get('model', 'contextual'),
            objective=ObjectiveSpec.from_dict(data.get('objective', {})),
            optimizer=OptimizerConfig.from_dict(data.get('optimizer', {})),
            baseline=baseline,
        )


@dataclass
class BenchConfig:
    """Typed benchmark configuration (see ``configs/bench.yaml``)."""

    environment: dict[str, Any]
    policies: list[PolicySpec]
    replications: int = 1
    seed: int = 0
    out_dir: Path = OUTPUT_DIR
    threads: int = 1
    c_prior: float = C_PRIOR_FACTOR
    baseline_id: str = "uniform"
    lr_sweep: list[float] = field(default_factory=list)
    pareto_weights: list[tuple[float, float]] = field(default_factory=list)
    pareto_ttts_betas: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("'replications' must be at least 1", field='replications')
        if not self.policies:
            raise ConfigError("'policies' must be non-empty", field='policies')

    @classmethod
    def from_dict(cls, data: dict[str, Any], filename: str = "config") -> "BenchConfig":
        validate_bench_config(data, filename)
        pareto = data.get('pareto', {}) or {}
        return cls(
            environment=dict(data.get('environment', {})),
            policies=[PolicySpec.from_dict(p) for p in data['policies']],
            replications=int(data.get('replications', 1)),
            seed=int(data.get('seed', 0)),
            out_dir=Path(data.get('out_dir', OUTPUT_DIR)),
            threads=int(data.get('threads', 1)),
            c_prior=float(data.get('c_prior', C_PRIOR_FACTOR)),
            baseline_id=str(data.get('baseline', 'uniform')),
            lr_sweep=[float(r) for r in data.get('lr_sweep', [])],
            pareto_weights=[(float(a), float(b)) for a, b in pareto.get('weights', [])],
            pareto_ttts_betas=[float(b) for b in pareto.get('ttts_betas', [])],
        )

    def expanded_policies(self) -> list[PolicySpec]:
        return expand_lr_sweep(self.policies, self.lr_sweep)


@dataclass
class RunRecord:
    """Outcome of one (instance, policy, replication) episode."""

    policy_id: str
    instance_id: int
    replication: int
    seed: int
    simple_regret: float
    cumulative_regret: float
    policy_regret: float
    topk_regret: float
    chosen_arm: int
    allocations: list[np.ndarray]
    wall_time: float = 0.0
    fallbacks: int = 0

    def epoch_shares(self, weights_per_epoch: np.ndarray) -> list[list[float]]:
        """Per-epoch arm shares Σ_c μ_t(c) p_t(c, ·)."""
        return [(weights_per_epoch[t] @ alloc).tolist() for t, alloc in enumerate(self.allocations)]


def expand_lr_sweep(policies: Sequence[PolicySpec], rates: Sequence[float]) -> list[PolicySpec]:
    """Replace each RHO entry by one entry per learning rate, ids ``<id>[lr=<rate>]``."""
    if not rates:
        return list(policies)
    expanded = []
    for policy in policies:
        if policy.kind != PolicyKind.RHO:
            expanded.append(policy)
            continue
        for rate in rates:
            expanded.append(replace(
                policy,
                policy_id=f"{policy.policy_id}[lr={rate:g}]",
                optimizer=replace(policy.optimizer, learning_rate=rate),
            ))
    return expanded


def task_seed(master_seed: int, instance_id: int, policy_id: str, replication: int) -> int:
    """Deterministic 63-bit seed from (master seed, instance, policy, replication)."""
    digest = hashlib.sha256(f"{master_seed}:{instance_id}:{policy_id}:{replication}".encode()).digest()
    return int.from_bytes(digest[:8], 'little') >> 1


def _stream(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

def _noise(env_cfg: dict[str, Any]) -> NoiseSpec:
    noise = env_cfg.get('noise', {}) or {}
    return NoiseSpec(noise.get('kind', 'gaussian'), float(noise.get('df', 5.0)))


def build_instances(env_cfg: dict[str, Any], master_seed: int) -> list[Environment]:
    """Build the benchmark environments, each from its own seeded stream."""
    kind = env_cfg.get('kind', 'asos')
    count = int(env_cfg.get('num_instances', 1))
    num_arms = int(env_cfg.get('num_arms', 2))
    batch_size = int(env_cfg.get('batch_size', 100))
    noise = _noise(env_cfg)

    if kind == 'asos':
        if 'csv' in env_cfg:
            sources = read_asos_csv(env_cfg['csv'])[:count]
        else:
            sources = [
                synthetic_asos_instance(
                    int(env_cfg.get('num_intervals', 10)),
                    _stream(master_seed, idx, 1),
                    mean_gap=float(env_cfg.get('mean_gap', 0.0093)),
                    variance=float(env_cfg.get('variance', 33.76)),
                    flip_prob=float(env_cfg.get('flip_prob', 0.2)),
                    name=f"synthetic-{idx}",
                )
                for idx in range(count)
            ]
        return [
            gen_asos_like(source, num_arms, _stream(master_seed, idx, 2), batch_size, noise)
            for idx, source in enumerate(sources)
        ]

    num_epochs = int(env_cfg.get('num_epochs', 5))
    pool_size = int(env_cfg.get('pool_size', 20))
    if kind == 'linear':
        return [
            gen_linear_contextual(
                num_arms, int(env_cfg.get('context_dim', 3)), pool_size, num_epochs, batch_size,
                _stream(master_seed, idx, 3), float(env_cfg.get('noise_var', 1.0)), noise=noise,
            )
            for idx in range(count)
        ]

    instances = []
    for idx in range(count):
        rng = _stream(master_seed, idx, 4)
        dim = int(env_cfg.get('content_dim', 4))
        ranking = RankingEnv(
            user_mean=np.zeros(dim),
            user_cov=np.eye(dim),
            contents=rng.standard_normal((int(env_cfg.get('num_contents', 10)), dim)),
            rankers=rng.standard_normal((num_arms, dim)),
            items_per_user=int(env_cfg.get('items_per_user', 3)),
            theta_star=rng.standard_normal(dim),
            noise_var=float(env_cfg.get('noise_var', 1.0)),
        )
        instances.append(ranking_environment(ranking, pool_size, num_epochs, batch_size, rng))
    return instances


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

def planning_model(env: Environment, which: str) -> ModelSpec:
    """The environment's own model, or the misspecified arm-effects model."""
    if which == "noncontextual":
        return ModelSpec.build(ArmEffects(), env.ctx, env.num_arms, env.model.noise_scale, env.model.loss_family)
    return env.model


def empirical_allocation(contexts: np.ndarray, arms: np.ndarray, num_contexts: int, num_arms: int) -> np.ndarray:
    """Assignment frequencies per context; contexts without units get the batch-level frequency."""
    counts = np.zeros((num_contexts, num_arms))
    np.add.at(counts, (contexts, arms), 1.0)
    overall = counts.sum(axis=0) / max(1.0, counts.sum())
    totals = counts.sum(axis=1, keepdims=True)
    return np.where(totals > 0, counts / np.maximum(totals, 1.0), overall[None, :])


def run_episode(
    env: Environment,
    policy: PolicySpec,
    instance_id: int,
    replication: int,
    master_seed: int,
    c_prior: float = C_PRIOR_FACTOR,
    trace: list[dict[str, Any]] | None = None,
) -> RunRecord:
    """Run one experiment of T epochs under a policy and score it against the truth.

    Environment draws come from streams keyed by (master seed, instance,
    replication, epoch) only, so paired policies see the same units and noise.
    Policy randomness comes from the task seed, which also keys the policy id.

    Args:
        env: Environment
        policy: Policy under test
        instance_id: Index of env in the benchmark
        replication: Replication index
        master_seed: Benchmark master seed
        c_prior: Prior scale constant
        trace: Optional list receiving one dict per epoch

    Returns:
        RunRecord with realized regrets
    """
    started = time.perf_counter()
    seed = task_seed(master_seed, instance_id, policy.policy_id, replication)
    policy_rng = np.random.default_rng(seed)
    model = planning_model(env, policy.model)
    ctx, horizon = env.ctx, env.horizon
    spec = policy.objective.fresh()
    opt = replace(policy.optimizer, seed=seed % (2 ** 32))

    state = prior_state(model.dim, horizon, model.noise_scale, c_prior)
    allocations, fallbacks = [], 0
    for epoch in range(horizon.total_epochs):
        env_rng = _stream(master_seed, instance_id, replication, epoch)
        contexts = sample_contexts(env, epoch, env_rng)

        if policy.kind in (PolicyKind.TS, PolicyKind.TTTS):
            if policy.kind == PolicyKind.TS:
                arms = ts_assign(state, model, ctx, contexts, policy_rng)
            else:
                result = ttts_assign(state, model, ctx, contexts, policy.baseline.beta_param,
                                     policy_rng, policy.baseline.resample_cap)
                arms, fallbacks = result.arms, fallbacks + result.fallbacks
            alloc = empirical_allocation(contexts, arms, ctx.num_contexts, model.num_arms)
        else:
            if policy.kind == PolicyKind.RHO:
                alloc, _ = rho_policy_step(state, horizon, model, ctx, spec, opt)
            elif policy.kind == PolicyKind.DTS:
                shares = dts_alloc(state, np.sqrt(model.noise_scale), policy.baseline.mc_draws, policy_rng)
                alloc = np.tile(shares, (ctx.num_contexts, 1))
            else:
                alloc = uniform_alloc(model.num_arms, ctx.num_contexts)
            arms = sample_arms(alloc, contexts, env_rng)

        data, batch_reward = observe(env, contexts, arms, epoch, env_rng)
        state = update(state, fit_batch(model, ctx, data))
        allocations.append(np.asarray(alloc, dtype=float))
        if trace is not None:
            trace.append(_trace_row(epoch, alloc, state, model, ctx, batch_reward))

    final = final_decision(state, spec, model, ctx)
    topk = spec.active(TermKind.TOPK_SUM)
    regrets = realized_regret(env.theta_star, allocations, final, env.model, ctx, horizon, topk.k if topk else 1)
    return RunRecord(
        policy_id=policy.policy_id,
        instance_id=instance_id,
        replication=replication,
        seed=seed,
        simple_regret=regrets['simple'],
        cumulative_regret=regrets['cumulative'],
        policy_regret=regrets['policy'],
        topk_regret=regrets['topk'],
        chosen_arm=chosen_arm(final, ctx),
        allocations=allocations,
        wall_time=time.perf_counter() - started,
        fallbacks=fallbacks,
    )


def _trace_row(epoch, alloc, state: PosteriorState, model: ModelSpec, ctx, batch_reward: float) -> dict[str, Any]:
    means = arm_means(model, ctx, state.beta)
    return {
        'epoch': epoch,
        'allocation': (ctx.weights_per_epoch[epoch] @ np.atleast_2d(alloc)).tolist(),
        'best_arm': int(np.argmax(means)),
        'best_arm_mean': float(means.max()),
        'batch_reward': batch_reward,
    }


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

def run_policies(
    instances: Sequence[Environment],
    policies: Sequence[PolicySpec],
    replications: int,
    master_seed: int,
    threads: int = 1,
    c_prior: float = C_PRIOR_FACTOR,
) -> list[RunRecord]:
    """Run every (instance, policy, replication) task; results come back in key order."""
    tasks = [
        (idx, policy, rep)
        for idx in range(len(instances))
        for policy in policies
        for rep in range(replications)
    ]

    def run(task):
        idx, policy, rep = task
        record = run_episode(instances[idx], policy, idx, rep, master_seed, c_prior)
        logger.info("%s on instance %d rep %d: simple regret %.6g", policy.policy_id, idx, rep, record.simple_regret)
        return record

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, tasks))


def records_frame(records: Sequence[RunRecord], instances: Sequence[Environment]) -> pd.DataFrame:
    """One row per RunRecord in the runs.csv layout."""
    rows = []
    for r in records:
        weights = instances[r.instance_id].ctx.weights_per_epoch
        rows.append({
            'policy_id': r.policy_id,
            'instance_id': r.instance_id,
            'replication': r.replication,
            'seed': r.seed,
            'simple_regret': r.simple_regret,
            'cumulative_regret': r.cumulative_regret,
            'policy_regret': r.policy_regret,
            'topk_regret': r.topk_regret,
            'chosen_arm': r.chosen_arm,
            'allocations': json.dumps(r.epoch_shares(weights)),
        })
    return pd.DataFrame(rows, columns=RUNS_COLUMNS)


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')


def instance_ratios(runs: pd.DataFrame, baseline_id: str, metric: str = 'simple_regret') -> pd.DataFrame:
    """Instance-mean regret of every policy divided by the baseline's instance-mean regret.

    Raises:
        MissingBaseline: If the baseline policy has no runs
    """
    if baseline_id not in set(runs['policy_id']):
        raise MissingBaseline(f"Baseline policy '{baseline_id}' not found in runs")
    means = runs.groupby(['policy_id', 'instance_id'], sort=True)[metric].mean().unstack('policy_id')
    base = means[baseline_id].to_numpy()
    ratios = {}
    for policy_id in means.columns:
        values = means[policy_id].to_numpy()
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = np.where(base > 0, values / np.where(base > 0, base, 1.0), np.where(values > 0, np.inf, 1.0))
        ratios[policy_id] = ratio
    return pd.DataFrame(ratios, index=means.index)


def summarize(runs: pd.DataFrame, baseline_id: str) -> dict[str, Any]:
    """Per-policy means plus the beat-the-baseline fraction and conditional normalized means."""
    ratios = instance_ratios(runs, baseline_id)
    means = runs.groupby('policy_id', sort=True)[['simple_regret', 'cumulative_regret', 'policy_regret', 'topk_regret']].mean()
    summary: dict[str, Any] = {'baseline': baseline_id, 'policies': {}}
    for policy_id in means.index:
        ratio = ratios[policy_id].to_numpy()
        beat, lost = ratio[ratio < 1.0], ratio[ratio > 1.0]
        summary['policies'][policy_id] = {
            **{k: float(v) for k, v in means.loc[policy_id].items()},
            'num_instances': int(ratio.size),
            'fraction_beating_baseline': float(np.mean(ratio < 1.0)),
            'mean_normalized_regret': float(np.mean(ratio)),
            'mean_normalized_regret_when_beating': float(beat.mean()) if beat.size else None,
            'mean_normalized_regret_when_losing': float(lost.mean()) if lost.size else None,
        }
    return summary


def benchmark_pattern(summary: dict[str, Any], challenger: str, reference: str) -> bool:
    """Whether ``challenger`` beats the baseline on more instances than ``reference`` does.

    It must also lose by less where it loses, compared on the mean normalized
    regret over losing instances. A challenger with no losing instance meets that condition.
    """
    ours, theirs = summary['policies'][challenger], summary['policies'][reference]
    if ours['fraction_beating_baseline'] <= theirs['fraction_beating_baseline']:
        return False
    our_loss = ours['mean_normalized_regret_when_losing']
    their_loss = theirs['mean_normalized_regret_when_losing']
    if our_loss is None:
        return True
    return their_loss is not None and our_loss < their_loss


@dataclass
class BenchResult:
    records: list[RunRecord]
    runs: pd.DataFrame
    summary: dict[str, Any]
    paths: list[Path]


def run_bench(config: BenchConfig) -> BenchResult:
    """Run the benchmark protocol and write runs.csv, timings.csv and summary.json."""
    instances = build_instances(config.environment, config.seed)
    policies = config.expanded_policies()
    logger.info("Benchmark: %d instances, %d policies, %d replications",
                len(instances), len(policies), config.replications)
    records = run_policies(instances, policies, config.replications, config.seed, config.threads, config.c_prior)
    runs = records_frame(records, instances)

    out_dir = Path(config.out_dir)
    runs_path, timings_path, summary_path = out_dir / "runs.csv", out_dir / "timings.csv", out_dir / "summary.json"
    write_csv(runs, runs_path)
    timings = pd.DataFrame(
        [{'policy_id': r.policy_id, 'instance_id': r.instance_id, 'replication': r.replication,
          'wall_time': r.wall_time} for r in records],
        columns=TIMINGS_COLUMNS,
    )
    write_csv(timings, timings_path)

    paths = [runs_path, timings_path]
    summary = {}
    if config.baseline_id in {p.policy_id for p in policies}:
        summary = summarize(runs, config.baseline_id)
        with open(summary_path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        paths.append(summary_path)
    else:
        logger.warning("Baseline '%s' not among the policies; summary.json skipped", config.baseline_id)
    return BenchResult(records, runs, summary, paths)


def _simple_share(weights: tuple[float, float]) -> tuple[float, float]:
    n_within, n_post = weights
    total = n_within + n_post
    return (n_post / total if total > 0 else 0.0, n_post)


def pareto_sweep(config: BenchConfig) -> pd.DataFrame:
    """Frontier of mean simple and cumulative regret over objective weights.

    Every weight pair (n_within, n_post) becomes a RHO policy with
    ``ObjectiveSpec.from_unit_weights``; every TTTS β adds one TTTS point.
    RHO rows are sorted by the simple-regret share n_post / (n_within + n_post),
    TTTS rows by β.
    """
    if not config.pareto_weights and not config.pareto_ttts_betas:
        raise ConfigError("Pareto sweep needs a non-empty weight grid", field='pareto.weights')
    instances = build_instances(config.environment, config.seed)
    template = next((p for p in config.policies if p.kind == PolicyKind.RHO), PolicySpec("rho", PolicyKind.RHO))
    sum_n = float(sum(instances[0].horizon.batch_sizes))

    policies, meta = [], {}
    for n_within, n_post in sorted(config.pareto_weights, key=_simple_share):
        policy_id = f"rho[w={n_within:g},{n_post:g}]"
        objective = ObjectiveSpec.from_unit_weights(n_within, n_post, sum_n)
        objective.constraints = list(template.objective.constraints)
        policies.append(replace(template, policy_id=policy_id, objective=objective))
        meta[policy_id] = {'policy': 'rho', 'weight_within': n_within, 'weight_post': n_post, 'beta_param': np.nan}
    for beta in sorted(config.pareto_ttts_betas):
        policy_id = f"ttts[beta={beta:g}]"
        ttts_template = next((p for p in config.policies if p.kind == PolicyKind.TTTS), None)
        model = ttts_template.model if ttts_template else "contextual"
        policies.append(PolicySpec(policy_id, PolicyKind.TTTS, model=model,
                                   baseline=BaselineSpec(PolicyKind.TTTS, beta_param=beta)))
        meta[policy_id] = {'policy': 'ttts', 'weight_within': np.nan, 'weight_post': np.nan, 'beta_param': beta}

    records = run_policies(instances, policies, config.replications, config.seed, config.threads, config.c_prior)
    runs = records_frame(records, instances)
    rows = []
    for policy in policies:
        subset = runs[runs['policy_id'] == policy.policy_id]
        count = len(subset)
        rows.append({
            'policy_id': policy.policy_id,
            **meta[policy.policy_id],
            'mean_simple_regret': subset['simple_regret'].mean(),
            'se_simple_regret': subset['simple_regret'].std(ddof=1) / np.sqrt(count) if count > 1 else 0.0,
            'mean_cumulative_regret': subset['cumulative_regret'].mean(),
            'se_cumulative_regret': subset['cumulative_regret'].std(ddof=1) / np.sqrt(count) if count > 1 else 0.0,
            'runs': count,
        })
    return pd.DataFrame(rows)


def simple_regret_monotone(frame: pd.DataFrame, max_inversions: int = 1) -> bool:
    """Whether RHO's mean simple regret is non-increasing along the weight sweep.

    A rise between neighbouring points counts as an inversion when it is within
    one combined standard error; any larger rise fails outright.
    """
    rho = frame[frame['policy'] == 'rho']
    means = rho['mean_simple_regret'].to_numpy(dtype=float)
    ses = rho['se_simple_regret'].to_numpy(dtype=float)
    inversions = 0
    for i in range(1, len(means)):
        rise = means[i] - means[i - 1]
        if rise <= 0:
            continue
        if rise > np.hypot(ses[i], ses[i - 1]):
            return False
        inversions += 1
    return inversions <= max_inversions


def quantile_report(runs: pd.DataFrame | Path | str, baseline_id: str) -> pd.DataFrame:
    """Percentiles 0..100 of instance-mean simple regret normalized by the baseline.

    Returns:
        Long frame with columns policy_id, level, ratio, fraction_below_one

    Raises:
        MissingBaseline: If the baseline policy is not in the runs
    """
    if not isinstance(runs, pd.DataFrame):
        runs = pd.read_csv(runs)
    ratios = instance_ratios(runs, baseline_id)
    rows = []
    for policy_id in ratios.columns:
        ratio = ratios[policy_id].to_numpy()
        below = float(np.mean(ratio < 1.0))
        for level, value in zip(QUANTILE_LEVELS, np.percentile(ratio, QUANTILE_LEVELS)):
            rows.append({'policy_id': policy_id, 'level': level, 'ratio': float(value), 'fraction_below_one': below})
    return pd.DataFrame(rows, columns=['policy_id', 'level', 'ratio', 'fraction_below_one'])
