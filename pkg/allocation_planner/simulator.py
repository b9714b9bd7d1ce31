"""Ground-truth environments: batch sampling, noise families, ASOS-style and ranking instances."""

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from .errors import DimensionMismatch, MalformedInstance
from .model import (
    BatchData,
    ContextSet,
    EstimateSummary,
    LossFamily,
    MixedEffects,
    ModelSpec,
    fit_batch,
    fit_rows,
)
from .posterior import HorizonSpec

logger = logging.getLogger(__name__)

ASOS_COLUMNS = ["experiment_id", "metric_id", "time_index", "mean_c", "var_c", "mean_t", "var_t"]


class NoiseKind(StrEnum):
    GAUSSIAN = "gaussian"
    GUMBEL = "gumbel"
    STUDENT_T = "student_t"


@dataclass(frozen=True)
class NoiseSpec:
    """Centered reward noise scaled to the per-arm variance s²; ``df`` is used by StudentT."""

    kind: NoiseKind = NoiseKind.GAUSSIAN
    df: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', NoiseKind(self.kind))
        if self.kind == NoiseKind.STUDENT_T and not self.df > 2:
            raise ValueError(f"StudentT noise needs df > 2, got {self.df}")


def sample_noise(spec: NoiseSpec, variance: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean noise with the given variance per entry."""
    variance = np.asarray(variance, dtype=float)
    scale = np.sqrt(variance)
    if spec.kind == NoiseKind.GAUSSIAN:
        return scale * rng.standard_normal(variance.shape)
    if spec.kind == NoiseKind.GUMBEL:
        # standard Gumbel has mean γ and variance π²/6
        raw = rng.gumbel(size=variance.shape) - np.euler_gamma
        return raw * scale * np.sqrt(6.0) / np.pi
    return rng.standard_t(spec.df, size=variance.shape) * scale * np.sqrt((spec.df - 2.0) / spec.df)


@dataclass(frozen=True)
class Environment:
    """True model, parameter, contexts, horizon and noise law of one experiment instance."""

    model: ModelSpec
    theta_star: np.ndarray
    ctx: ContextSet
    horizon: HorizonSpec
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    name: str = "instance"

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        if theta.shape != (self.model.dim,):
            raise DimensionMismatch(f"theta_star has shape {theta.shape}, model dimension is {self.model.dim}")
        if self.ctx.num_epochs < self.horizon.total_epochs:
            raise DimensionMismatch(
                f"Context set covers {self.ctx.num_epochs} epochs, horizon has {self.horizon.total_epochs}"
            )
        object.__setattr__(self, 'theta_star', theta)

    @property
    def num_arms(self) -> int:
        return self.model.num_arms

    def to_dict(self) -> dict[str, Any]:
        return {
            'name': self.name,
            'feature_map': type(self.model.feature_map).__name__,
            'loss_family': str(self.model.loss_family),
            'num_arms': self.model.num_arms,
            'dim': self.model.dim,
            'noise': {'kind': str(self.noise.kind), 'df': self.noise.df},
            'noise_scale': self.model.noise_scale.tolist(),
            'theta_star': self.theta_star.tolist(),
            'batch_sizes': list(self.horizon.batch_sizes),
            'contexts': self.ctx.contexts.tolist(),
            'weights_per_epoch': self.ctx.weights_per_epoch.tolist(),
            'population_weights': self.ctx.population_weights.tolist(),
        }


def sample_contexts(env: Environment, epoch: int, rng: np.random.Generator) -> np.ndarray:
    """Context index of every unit in epoch ``epoch``'s batch."""
    n = env.horizon.batch_sizes[epoch]
    return rng.choice(env.ctx.num_contexts, size=n, p=env.ctx.weights_per_epoch[epoch])


def sample_arms(alloc: np.ndarray, contexts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one arm per unit from its context's allocation row."""
    alloc = np.atleast_2d(alloc)
    if alloc.shape[0] == 1:
        alloc = np.broadcast_to(alloc, (int(contexts.max(initial=0)) + 1, alloc.shape[1]))
    cumulative = np.cumsum(alloc[contexts], axis=1)
    u = rng.random(len(contexts))[:, None] * cumulative[:, -1:]
    return np.minimum((cumulative <= u).sum(axis=1), alloc.shape[1] - 1)


def observe(
    env: Environment,
    contexts: np.ndarray,
    arms: np.ndarray,
    epoch: int,
    rng: np.random.Generator,
) -> tuple[BatchData, float]:
    """Rewards for units with given contexts and arms.

    Every unit emits one row per observation slot of the true feature map.

    Returns:
        (batch rows, total realized reward)
    """
    contexts = np.asarray(contexts, dtype=int)
    arms = np.asarray(arms, dtype=int)
    features = env.model.feature_tensor(env.ctx)
    slots_per_unit = features.shape[2]
    unit_index = np.repeat(np.arange(len(contexts)), slots_per_unit)
    slots = np.tile(np.arange(slots_per_unit), len(contexts))
    row_contexts, row_arms = contexts[unit_index], arms[unit_index]

    eta = features[row_contexts, row_arms, slots] @ env.theta_star
    if env.model.loss_family == LossFamily.LOGISTIC:
        rewards = (rng.random(eta.shape) < expit(eta)).astype(float)
    else:
        rewards = eta + sample_noise(env.noise, env.model.noise_scale[row_arms], rng)

    data = BatchData(row_contexts, row_arms, rewards, epoch, slots)
    return data, float(rewards.sum())


def run_batch(
    env: Environment,
    alloc: np.ndarray,
    epoch: int,
    rng: np.random.Generator,
    model: ModelSpec | None = None,
) -> tuple[BatchData, EstimateSummary, float]:
    """Sample one batch under an allocation and fit it.

    Args:
        env: Environment
        alloc: (C, K) allocation for this epoch
        epoch: Epoch index, must be below T
        rng: Random generator
        model: Model to fit the batch with (defaults to the true model)

    Returns:
        (batch rows, ERM summary, total realized reward)
    """
    if not 0 <= epoch < env.horizon.total_epochs:
        raise ValueError(f"Epoch {epoch} is outside the horizon of {env.horizon.total_epochs}")
    contexts = sample_contexts(env, epoch, rng)
    arms = sample_arms(alloc, contexts, rng)
    data, total = observe(env, contexts, arms, epoch, rng)
    summary = fit_batch(model or env.model, env.ctx, data)
    return data, summary, total


# ---------------------------------------------------------------------------
# Linear contextual instances
# ---------------------------------------------------------------------------

def gen_linear_contextual(
    num_arms: int,
    context_dim: int,
    pool_size: int,
    num_epochs: int,
    batch_size: int,
    rng: np.random.Generator,
    noise_var: float = 1.0,
    user_scale: float = 1.0,
    noise: NoiseSpec | None = None,
) -> Environment:
    """Item-by-item personalization: users x ~ N(0, user_scale² I) drawn into a finite pool,
    per-arm coefficients θ_a ~ N(0, I), rewards N(xᵀθ_a, s²)."""
    users = user_scale * rng.standard_normal((pool_size, context_dim))
    weights = np.full(pool_size, 1.0 / pool_size)
    ctx = ContextSet(users, np.tile(weights, (num_epochs, 1)), weights)
    model = ModelSpec.build(MixedEffects(), ctx, num_arms, noise_var)
    theta = rng.standard_normal(model.dim)
    horizon = HorizonSpec.constant(num_epochs, batch_size)
    return Environment(model, theta, ctx, horizon, noise or NoiseSpec(), name="linear_contextual")


# ---------------------------------------------------------------------------
# ASOS-style non-stationary instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AsosInstance:
    """Per-interval sample means and variances of a two-arm experiment."""

    control_mean: np.ndarray
    control_var: np.ndarray
    treatment_mean: np.ndarray
    treatment_var: np.ndarray
    name: str = "asos"

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, f), dtype=float) for f in
                  ('control_mean', 'control_var', 'treatment_mean', 'treatment_var')]
        lengths = {a.shape for a in arrays}
        if len(lengths) != 1 or arrays[0].ndim != 1 or arrays[0].size == 0:
            raise MalformedInstance(f"Interval series of {self.name} have inconsistent lengths: {sorted(lengths)}")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise MalformedInstance(f"Non-finite value in {self.name}")
        if np.any(arrays[1] <= 0) or np.any(arrays[3] <= 0):
            raise MalformedInstance(f"Variances must be positive in {self.name}")
        for name, a in zip(('control_mean', 'control_var', 'treatment_mean', 'treatment_var'), arrays):
            object.__setattr__(self, name, a)

    @property
    def num_intervals(self) -> int:
        return self.control_mean.shape[0]

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.treatment_mean - self.control_mean)


def synthetic_asos_instance(
    num_intervals: int,
    rng: np.random.Generator,
    mean_gap: float = 0.0093,
    variance: float = 33.76,
    base_mean: float = 0.0,
    seasonality: float = 0.05,
    flip_prob: float = 0.2,
    name: str = "synthetic",
) -> AsosInstance:
    """Generate an instance with weekly seasonality and a treatment gap whose sign may switch.

    The defaults are the average gap and variance of the ASOS experiment metrics.
    """
    t = np.arange(num_intervals)
    control = base_mean + seasonality * np.sin(2.0 * np.pi * t / 7.0)
    magnitude = mean_gap * np.abs(1.0 + 0.5 * rng.standard_normal(num_intervals))
    sign = np.where(rng.random() < 0.5, 1.0, -1.0) * np.cumprod(np.where(rng.random(num_intervals) < flip_prob, -1.0, 1.0))
    treatment = control + sign * magnitude
    control_var = variance * np.exp(0.1 * rng.standard_normal(num_intervals))
    treatment_var = variance * np.exp(0.1 * rng.standard_normal(num_intervals))
    return AsosInstance(control, control_var, treatment, treatment_var, name)


def gen_asos_like(
    source: AsosInstance,
    num_arms: int,
    rng: np.random.Generator,
    batch_size: int = 100,
    noise: NoiseSpec | None = None,
) -> Environment:
    """K-arm, T'-interval environment built from a two-arm interval series.

    Arms 0 and 1 are the control and treatment series. Every further arm k has
    means control + z_k·gap(t) with one z_k ~ N(0, 1) per arm, and the treatment
    variance. Context is the interval: x_t = [1; e_t] with MixedEffects features,
    one epoch per interval and a uniform population over intervals.

    Raises:
        ValueError: If num_arms < 2
    """
    if num_arms < 2:
        raise ValueError(f"ASOS-like instances need at least 2 arms, got {num_arms}")
    num_intervals = source.num_intervals
    shifts = rng.standard_normal(num_arms - 2)
    means = [source.control_mean, source.treatment_mean]
    means += [source.control_mean + z * source.gap for z in shifts]
    variances = [source.control_var, source.treatment_var] + [source.treatment_var] * (num_arms - 2)

    ctx = ContextSet.interval_indicators(num_intervals)
    noise_scale = np.array([v.mean() for v in variances])
    model = ModelSpec.build(MixedEffects(), ctx, num_arms, noise_scale)
    # φ = e_a ⊗ [1; e_t]: the intercept block is 0 and the indicator block holds the interval means
    theta = np.concatenate([np.concatenate([[0.0], m]) for m in means])
    horizon = HorizonSpec.constant(num_intervals, batch_size)

    snr = float(source.gap.mean() / np.sqrt(source.treatment_var.mean() / batch_size))
    logger.info("Instance %s: %d arms, %d intervals, per-batch SNR %.4f", source.name, num_arms, num_intervals, snr)
    return Environment(model, theta, ctx, horizon, noise or NoiseSpec(), name=source.name)


def read_asos_csv(path: Path | str) -> list[AsosInstance]:
    """Read one AsosInstance per (experiment_id, metric_id) from an ASOS-format CSV.

    Raises:
        MalformedInstance: On a wrong header, NaN values or repeated intervals
    """
    path = Path(path)
    frame = pd.read_csv(path, encoding='utf-8')
    if list(frame.columns) != ASOS_COLUMNS:
        raise MalformedInstance(f"Unexpected header in {path.name}: {list(frame.columns)}")
    if frame.isna().any().any():
        row = int(np.flatnonzero(frame.isna().any(axis=1).to_numpy())[0])
        raise MalformedInstance(f"Missing value in {path.name} at data row {row + 1}")

    instances = []
    for (experiment, metric), group in frame.groupby(['experiment_id', 'metric_id'], sort=True):
        group = group.sort_values('time_index')
        if group['time_index'].duplicated().any():
            raise MalformedInstance(f"Repeated time_index in {experiment}/{metric} of {path.name}")
        instances.append(AsosInstance(
            group['mean_c'].to_numpy(float),
            group['var_c'].to_numpy(float),
            group['mean_t'].to_numpy(float),
            group['var_t'].to_numpy(float),
            name=f"{experiment}/{metric}",
        ))
    return instances


def write_asos_csv(instances: Sequence[AsosInstance], path: Path | str) -> None:
    """Write instances in the ASOS CSV format."""
    frames = []
    for instance in instances:
        experiment, _, metric = instance.name.partition('/')
        frames.append(pd.DataFrame({
            'experiment_id': experiment,
            'metric_id': metric or '0',
            'time_index': np.arange(instance.num_intervals),
            'mean_c': instance.control_mean,
            'var_c': instance.control_var,
            'mean_t': instance.treatment_mean,
            'var_t': instance.treatment_var,
        }))
    frame = pd.concat(frames, ignore_index=True)[ASOS_COLUMNS]
    frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


# ---------------------------------------------------------------------------
# Ranking environment
# ---------------------------------------------------------------------------

def top_items(x: np.ndarray, contents: np.ndarray, weights: np.ndarray, b: int) -> np.ndarray:
    """Indices of the b contents with largest ⟨x, z⟩_w = Σ_i w_i x_i z_i (ties to the lower index)."""
    scores = contents @ (weights * np.asarray(x, dtype=float))
    return np.argsort(-scores, kind='stable')[:b]


@dataclass(frozen=True)
class RankingFeatures:
    """Feature map of a ranker: one row x ⊙ z per content item z shown to user x."""

    contents: np.ndarray
    rankers: np.ndarray
    items_per_user: int

    def __call__(self, x: np.ndarray, a: int, num_arms: int) -> np.ndarray:
        chosen = top_items(x, self.contents, self.rankers[a], self.items_per_user)
        return np.asarray(x, dtype=float)[None, :] * self.contents[chosen]

    def dim(self, context_dim: int, num_arms: int) -> int:
        return self.contents.shape[1]


@dataclass(frozen=True)
class RankingEnv:
    """Users x ~ N(user_mean, user_cov); ranker k shows the top b contents under ⟨x, z⟩_{w_k}."""

    user_mean: np.ndarray
    user_cov: np.ndarray
    contents: np.ndarray
    rankers: np.ndarray
    items_per_user: int
    theta_star: np.ndarray
    noise_var: float = 1.0

    def __post_init__(self):
        for name in ('user_mean', 'user_cov', 'contents', 'rankers', 'theta_star'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not 1 <= self.items_per_user <= self.contents.shape[0]:
            raise ValueError(f"'items_per_user' must be in [1, {self.contents.shape[0]}], got {self.items_per_user}")
        if not np.all(np.isfinite(self.rankers)):
            raise ValueError("Ranker weights must be finite")
        dim = self.contents.shape[1]
        if self.rankers.shape[1] != dim or self.theta_star.shape != (dim,) or self.user_mean.shape != (dim,):
            raise DimensionMismatch("Ranking environment vectors must share the content dimension")

    @property
    def num_arms(self) -> int:
        return self.rankers.shape[0]

    def feature_map(self) -> RankingFeatures:
        return RankingFeatures(self.contents, self.rankers, self.items_per_user)

    def sample_users(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.multivariate_normal(self.user_mean, self.user_cov, size=size)


@dataclass(frozen=True)
class RankingObservation:
    """Rows of one ranking batch: one (x ⊙ z, reward) per shown item."""

    rows: np.ndarray
    rewards: np.ndarray
    unit_rewards: np.ndarray
    row_users: np.ndarray


def ranking_step(
    env: RankingEnv,
    users: np.ndarray,
    choices: np.ndarray,
    rng: np.random.Generator,
    epoch: int = 0,
) -> tuple[RankingObservation, EstimateSummary]:
    """Show each user the top-b items of their chosen ranker and observe per-item rewards.

    Args:
        env: Ranking environment
        users: (n, d) user feature vectors
        choices: Ranker index per user
        rng: Random generator
        epoch: Epoch index recorded in the fit

    Returns:
        (observed rows and rewards, squared-error batch summary under φ(x, z) = x ⊙ z)
    """
    users = np.atleast_2d(np.asarray(users, dtype=float))
    choices = np.asarray(choices, dtype=int)
    if np.any(choices < 0) or np.any(choices >= env.num_arms):
        raise ValueError("Ranker index out of range")
    features = env.feature_map()
    blocks = [features(x, a, env.num_arms) for x, a in zip(users, choices)]
    rows = np.vstack(blocks)
    row_users = np.repeat(np.arange(len(users)), env.items_per_user)
    rewards = rows @ env.theta_star + np.sqrt(env.noise_var) * rng.standard_normal(rows.shape[0])
    unit_rewards = np.bincount(row_users, weights=rewards, minlength=len(users))
    summary = fit_rows(LossFamily.SQUARED_ERROR, rows, rewards, epoch)
    return RankingObservation(rows, rewards, unit_rewards, row_users), summary


def ranking_arm_means(env: RankingEnv, users: np.ndarray) -> np.ndarray:
    """Monte Carlo arm means E_x[Σ_{z shown} (x ⊙ z)ᵀθ*] over the given users."""
    features = env.feature_map()
    return np.array([
        np.mean([float((features(x, a, env.num_arms) @ env.theta_star).sum()) for x in users])
        for a in range(env.num_arms)
    ])


def ranking_environment(
    env: RankingEnv,
    pool_size: int,
    num_epochs: int,
    batch_size: int,
    rng: np.random.Generator,
) -> Environment:
    """Finite-pool Environment of a ranking problem; the arms are the rankers."""
    users = env.sample_users(pool_size, rng)
    weights = np.full(pool_size, 1.0 / pool_size)
    ctx = ContextSet(users, np.tile(weights, (num_epochs, 1)), weights)
    model = ModelSpec.build(env.feature_map(), ctx, env.num_arms, env.noise_var)
    horizon = HorizonSpec.constant(num_epochs, batch_size)
    return Environment(model, env.theta_star, ctx, horizon, NoiseSpec(), name="ranking")
