"""Comparison policies on the Gaussian posterior state: Uniform, TS, Top-Two TS and Density TS."""

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
from scipy import stats
from scipy.special import expit

from .config import DTS_DRAWS, TTTS_BETA, TTTS_RESAMPLE_CAP
from .errors import DegeneratePosterior
from .linalg import psd_sqrt
from .model import ContextSet, LossFamily, ModelSpec
from .posterior import PosteriorState

logger = logging.getLogger(__name__)

# Units scored per vectorized block in the TS argmax
_CHUNK = 4096


class BaselineKind(StrEnum):
    UNIFORM = "uniform"
    TS = "ts"
    TTTS = "ttts"
    DTS = "dts"


@dataclass(frozen=True)
class BaselineSpec:
    kind: BaselineKind
    beta_param: float = TTTS_BETA
    mc_draws: int = DTS_DRAWS
    resample_cap: int = TTTS_RESAMPLE_CAP

    def __post_init__(self):
        object.__setattr__(self, 'kind', BaselineKind(self.kind))
        if not 0.0 < self.beta_param <= 1.0:
            raise ValueError(f"'beta_param' must be in (0, 1], got {self.beta_param}")
        if self.mc_draws < 100:
            raise ValueError(f"'mc_draws' must be at least 100, got {self.mc_draws}")
        if self.resample_cap < 1:
            raise ValueError(f"'resample_cap' must be positive, got {self.resample_cap}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BaselineSpec":
        return cls(
            kind=data['kind'],
            beta_param=float(data.get('beta_param', TTTS_BETA)),
            mc_draws=int(data.get('mc_draws', DTS_DRAWS)),
            resample_cap=int(data.get('resample_cap', TTTS_RESAMPLE_CAP)),
        )


@dataclass(frozen=True)
class TopTwoAssignment:
    """Per-unit arms plus the number of units whose challenger search hit the cap."""

    arms: np.ndarray
    fallbacks: int = 0


def uniform_alloc(num_arms: int, num_contexts: int = 1) -> np.ndarray:
    """Every row 1/K."""
    return np.full((num_contexts, num_arms), 1.0 / num_arms)


def _posterior_draws(state: PosteriorState, size: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((size, state.dim))
    return state.beta + z @ psd_sqrt(state.sigma)


def _best_arms(model: ModelSpec, features: np.ndarray, contexts: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """argmax_a f(x_i, a; θ_i) for each unit (ties to the lowest index)."""
    best = np.empty(len(contexts), dtype=int)
    for start in range(0, len(contexts), _CHUNK):
        stop = start + _CHUNK
        eta = np.einsum('nkmd,nd->nkm', features[contexts[start:stop]], thetas[start:stop])
        if model.loss_family == LossFamily.LOGISTIC:
            eta = expit(eta)
        best[start:stop] = np.argmax(eta.sum(axis=-1), axis=1)
    return best


def ts_assign(
    state: PosteriorState,
    model: ModelSpec,
    ctx: ContextSet,
    batch_contexts: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Thompson sampling: one posterior draw per unit, assign its best arm.

    Args:
        state: Current posterior
        model: Planning model
        ctx: Context set
        batch_contexts: Context index of every unit in the batch
        rng: Random generator

    Returns:
        Arm index per unit
    """
    contexts = np.asarray(batch_contexts, dtype=int)
    if model.num_arms == 1:
        return np.zeros(len(contexts), dtype=int)
    thetas = _posterior_draws(state, len(contexts), rng)
    return _best_arms(model, model.feature_tensor(ctx), contexts, thetas)


def ttts_assign(
    state: PosteriorState,
    model: ModelSpec,
    ctx: ContextSet,
    batch_contexts: np.ndarray,
    beta_param: float,
    rng: np.random.Generator,
    resample_cap: int = TTTS_RESAMPLE_CAP,
) -> TopTwoAssignment:
    """Top-Two Thompson sampling.

    Every unit first gets its TS arm A. With probability ``beta_param`` A is
    kept; otherwise posterior draws are repeated until their best arm differs
    from A. After ``resample_cap`` failed draws the unit keeps A and counts as
    a fallback. The leader draws consume the generator exactly as ``ts_assign``,
    so ``beta_param = 1`` reproduces it.
    """
    contexts = np.asarray(batch_contexts, dtype=int)
    if model.num_arms == 1:
        return TopTwoAssignment(np.zeros(len(contexts), dtype=int))

    features = model.feature_tensor(ctx)
    leaders = _best_arms(model, features, contexts, _posterior_draws(state, len(contexts), rng))
    if beta_param >= 1.0:
        return TopTwoAssignment(leaders)

    arms = leaders.copy()
    pending = np.flatnonzero(rng.random(len(contexts)) >= beta_param)
    for _ in range(resample_cap):
        if pending.size == 0:
            break
        challengers = _best_arms(model, features, contexts[pending], _posterior_draws(state, pending.size, rng))
        found = challengers != leaders[pending]
        arms[pending[found]] = challengers[found]
        pending = pending[~found]

    if pending.size:
        logger.warning("TTTS kept the leader for %d units after %d resamples", pending.size, resample_cap)
    return TopTwoAssignment(arms, int(pending.size))


def _independent_marginals(state: PosteriorState) -> tuple[np.ndarray, np.ndarray]:
    variances = np.diag(state.sigma)
    if np.any(variances <= 0):
        bad = int(np.flatnonzero(variances <= 0)[0])
        raise DegeneratePosterior(f"Posterior standard deviation of arm {bad} is not positive")
    return state.beta, np.sqrt(variances)


def dts_index(
    state: PosteriorState,
    noise_std: np.ndarray,
    num_draws: int = DTS_DRAWS,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Density TS index s_a · E[(1/σ_a) φ((θ*_a - μ_a)/σ_a)]^{1/2}, θ*_a = max_{a'≠a} θ_a'.

    One joint posterior draw per Monte Carlo sample serves every arm.
    """
    mu, sigma = _independent_marginals(state)
    rng = rng or np.random.default_rng(0)
    draws = mu + sigma * rng.standard_normal((num_draws, mu.shape[0]))

    order = np.argsort(-draws, axis=1, kind='stable')
    top = np.take_along_axis(draws, order[:, :1], axis=1)
    second = np.take_along_axis(draws, order[:, 1:2], axis=1)
    others_max = np.where(np.arange(mu.shape[0])[None, :] == order[:, :1], second, top)

    density = stats.norm.pdf((others_max - mu) / sigma) / sigma
    index = np.asarray(noise_std, dtype=float) * np.sqrt(density.mean(axis=0))
    return np.maximum(index, np.finfo(float).tiny)


def dts_alloc(
    state: PosteriorState,
    noise_std: np.ndarray,
    num_draws: int = DTS_DRAWS,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Density TS allocation for a non-contextual independent posterior, proportional to the index.

    Raises:
        DegeneratePosterior: If any posterior standard deviation is not positive
    """
    if state.dim == 1:
        return np.ones(1)
    index = dts_index(state, noise_std, num_draws, rng)
    return index / index.sum()


def dts_log_index_bounds(mu: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Leading-order lower and upper bounds on log E[(1/σ_a) φ((θ*_a - μ_a)/σ_a)].

    Both bounds hold up to additive terms logarithmic in min σ. The top two arms
    share the lower bound -(μ_1 - μ_2)²/(2(σ_1² + σ_2²)); any other arm gets
    -(μ_1 - μ_a)²/(2σ_a²). The upper bound is -min_{a'≠a} (μ_a' - μ_a)²/(2(σ_a² + σ_a'²)).
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(sigma, dtype=float) ** 2
    order = np.argsort(-mu, kind='stable')
    first, second = order[0], order[1]

    lower = -(mu[first] - mu) ** 2 / (2.0 * var)
    top_two = -(mu[first] - mu[second]) ** 2 / (2.0 * (var[first] + var[second]))
    lower[[first, second]] = top_two

    pair = (mu[:, None] - mu[None, :]) ** 2 / (2.0 * (var[:, None] + var[None, :]))
    np.fill_diagonal(pair, np.inf)
    upper = -pair.min(axis=1)
    return lower, upper
