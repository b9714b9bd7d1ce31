"""Gaussian posterior states and their transitions.

The state (β_t, Σ_t) is stored as mean and covariance. Updates use the
covariance form Σ' = Σ (I + GΣ)⁻¹ with G = n·H I† H, which equals
(Σ⁻¹ + G)⁻¹ whenever Σ is invertible and stays defined when it is not.
"""

from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np

from .config import C_PRIOR_FACTOR, TOL_RANK
from .errors import DimensionMismatch
from .linalg import psd_sqrt, pseudo_inverse, symmetrize
from .model import ContextSet, EstimateSummary, ModelSpec, information_matrices


@dataclass(frozen=True)
class PosteriorState:
    """Belief N(beta, sigma) over the model parameter at the start of `epoch`."""

    beta: np.ndarray
    sigma: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        sigma = symmetrize(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (beta.shape[0], beta.shape[0]):
            raise DimensionMismatch(f"Covariance shape {sigma.shape} does not match mean {beta.shape}")
        if not np.all(np.isfinite(beta)):
            raise ValueError("'beta' must be finite")
        object.__setattr__(self, 'beta', beta)
        object.__setattr__(self, 'sigma', sigma)

    @property
    def dim(self) -> int:
        return self.beta.shape[0]

    def to_dict(self) -> dict[str, Any]:
        return {'beta': self.beta.tolist(), 'sigma': self.sigma.tolist(), 'epoch': int(self.epoch)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PosteriorState":
        return cls(np.array(data['beta'], dtype=float), np.array(data['sigma'], dtype=float), int(data.get('epoch', 0)))


@dataclass(frozen=True)
class HorizonSpec:
    """Experiment horizon: batch sizes n_0..n_{T-1} and the post-experiment population.

    Args:
        batch_sizes: Units per epoch
        population_weights: Post-experiment context distribution (None means the
            ContextSet's population_weights)
        post_experiment_size: Units the final decision is deployed to (0 if unused)
    """

    batch_sizes: tuple[int, ...]
    population_weights: np.ndarray | None = None
    post_experiment_size: int = 0

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.batch_sizes)
        if len(sizes) < 1:
            raise ValueError("'batch_sizes' must contain at least one epoch")
        if any(n < 1 for n in sizes):
            raise ValueError("'batch_sizes' entries must be positive integers")
        object.__setattr__(self, 'batch_sizes', sizes)

    @property
    def total_epochs(self) -> int:
        return len(self.batch_sizes)

    @classmethod
    def constant(cls, num_epochs: int, batch_size: int, post_experiment_size: int = 0) -> "HorizonSpec":
        return cls(tuple([batch_size] * num_epochs), post_experiment_size=post_experiment_size)


def information_gain(h: np.ndarray, i: np.ndarray, n: int, tol_rank: float = TOL_RANK) -> np.ndarray:
    """Precision increment G = n · H I† H."""
    h = symmetrize(h)
    gain = n * h @ pseudo_inverse(i, tol_rank) @ h
    return 0.5 * (gain + gain.T)


def _shrink(sigma: np.ndarray, gain: np.ndarray) -> np.ndarray:
    # Σ (I + GΣ)⁻¹ = ((I + ΣG)⁻¹ Σ)ᵀ
    d = sigma.shape[0]
    new_sigma = np.linalg.solve(np.eye(d) + sigma @ gain, sigma)
    return 0.5 * (new_sigma + new_sigma.T)


def update(state: PosteriorState, obs: EstimateSummary, tol_rank: float = TOL_RANK) -> PosteriorState:
    """Conjugate update from a batch summary.

    Σ'⁻¹ = Σ⁻¹ + n·H I† H and β' = Σ'(Σ⁻¹β + n·H I† H·θ̂), written as
    β' = β + Σ' G (θ̂ - β) so that no inverse of Σ is needed.
    """
    if obs.theta_hat.shape != (state.dim,) or obs.hessian.shape != (state.dim, state.dim):
        raise DimensionMismatch(f"Observation dimension does not match state dimension {state.dim}")

    gain = information_gain(obs.hessian, obs.grad_cov, obs.n_units, tol_rank)
    if not np.any(gain):
        return replace(state, epoch=state.epoch + 1)

    new_sigma = _shrink(state.sigma, gain)
    new_beta = state.beta + new_sigma @ gain @ (obs.theta_hat - state.beta)
    return PosteriorState(new_beta, new_sigma, state.epoch + 1)


def transition_root(
    sigma: np.ndarray,
    h: np.ndarray,
    i: np.ndarray,
    n: int,
    tol_rank: float = TOL_RANK,
) -> tuple[np.ndarray, np.ndarray]:
    """Next covariance Σ_{t+1} and the increment scale (Σ_t - Σ_{t+1})^{1/2}."""
    new_sigma = _shrink(sigma, information_gain(h, i, n, tol_rank))
    drop = sigma - new_sigma
    return new_sigma, psd_sqrt(0.5 * (drop + drop.T))


def simulate_transition(
    state: PosteriorState,
    h: np.ndarray,
    i: np.ndarray,
    n: int,
    z: np.ndarray,
    tol_rank: float = TOL_RANK,
) -> PosteriorState:
    """Reparameterized posterior transition β_{t+1} = β_t + (Σ_t - Σ_{t+1})^{1/2} z."""
    z = np.asarray(z, dtype=float)
    if z.shape != (state.dim,):
        raise DimensionMismatch(f"Noise vector has shape {z.shape}, expected ({state.dim},)")
    new_sigma, root = transition_root(state.sigma, h, i, n, tol_rank)
    return PosteriorState(state.beta + root @ z, new_sigma, state.epoch + 1)


def rollout(
    state: PosteriorState,
    plan: Sequence[np.ndarray],
    model: ModelSpec,
    ctx: ContextSet,
    horizon: HorizonSpec,
    z_draws: np.ndarray,
    theta_ref: np.ndarray | None = None,
) -> list[PosteriorState]:
    """Simulate the posterior path under a static allocation sequence.

    Args:
        state: Starting state at epoch t
        plan: One (C, K) allocation per remaining epoch t..T-1
        model: Planning model
        ctx: Context set
        horizon: Batch sizes
        z_draws: (T - t, d) standard normal draws, one row per remaining epoch
        theta_ref: Reference parameter for I(p); defaults to the starting mean

    Returns:
        Trajectory [state_t, ..., state_T]
    """
    remaining = horizon.total_epochs - state.epoch
    if len(plan) != remaining:
        raise DimensionMismatch(f"Plan covers {len(plan)} epochs, {remaining} remain")
    z_draws = np.asarray(z_draws, dtype=float).reshape(remaining, state.dim) if remaining else z_draws
    theta_ref = state.beta if theta_ref is None else theta_ref

    trajectory = [state]
    current = state
    for step, alloc in enumerate(plan):
        epoch = state.epoch + step
        h, i = information_matrices(model, ctx, epoch, alloc, theta_ref)
        current = simulate_transition(current, h, i, horizon.batch_sizes[epoch], z_draws[step])
        trajectory.append(current)
    return trajectory


def prior_state(
    dim: int,
    horizon: HorizonSpec,
    noise_scale: float | np.ndarray = 1.0,
    c_prior: float = C_PRIOR_FACTOR,
) -> PosteriorState:
    """Isotropic prior N(0, λI) with λ = c_prior · mean(s²) / mean(n_t).

    ``noise_scale`` holds the per-arm reward variances s², as on ``ModelSpec``.
    """
    lam = c_prior * float(np.mean(noise_scale)) / float(np.mean(horizon.batch_sizes))
    return PosteriorState(np.zeros(dim), lam * np.eye(dim), 0)
