"""Reward models: feature maps, loss families, information matrices and per-batch fits."""

import logging
import warnings
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Callable, Protocol

import numpy as np
from scipy.special import expit

from .config import NEWTON_MAX_ITER, NEWTON_TOL, TOL_RANK
from .errors import DimensionMismatch, EmptyBatch, NonConvergenceWarning
from .linalg import pseudo_inverse

logger = logging.getLogger(__name__)


class LossFamily(StrEnum):
    SQUARED_ERROR = "squared_error"
    LOGISTIC = "logistic"


class FeatureMap(Protocol):
    """Maps (context vector, arm) to the observation rows of one unit, shape (m, d)."""

    def __call__(self, x: np.ndarray, a: int, num_arms: int) -> np.ndarray: ...

    def dim(self, context_dim: int, num_arms: int) -> int: ...


class ArmEffects:
    """Non-contextual model φ(x, a) = e_a; the context is ignored."""

    def __call__(self, x: np.ndarray, a: int, num_arms: int) -> np.ndarray:
        row = np.zeros((1, num_arms))
        row[0, a] = 1.0
        return row

    def dim(self, context_dim: int, num_arms: int) -> int:
        return num_arms


class AdditiveEffects:
    """Additive treatment effects with confounders, φ(x, a) = [x; e_a]."""

    def __call__(self, x: np.ndarray, a: int, num_arms: int) -> np.ndarray:
        arm = np.zeros(num_arms)
        arm[a] = 1.0
        return np.concatenate([np.asarray(x, dtype=float), arm])[None, :]

    def dim(self, context_dim: int, num_arms: int) -> int:
        return context_dim + num_arms


class MixedEffects:
    """Per-arm context coefficients, φ(x, a) = e_a ⊗ x."""

    def __call__(self, x: np.ndarray, a: int, num_arms: int) -> np.ndarray:
        arm = np.zeros(num_arms)
        arm[a] = 1.0
        return np.kron(arm, np.asarray(x, dtype=float))[None, :]

    def dim(self, context_dim: int, num_arms: int) -> int:
        return context_dim * num_arms


@dataclass(frozen=True)
class FeatureTable:
    """User-supplied rows per (context, arm), looked up by exact context match.

    Args:
        contexts: (C, p) context vectors the table is keyed by
        table: (C, K, m, d) observation rows
    """

    contexts: np.ndarray
    table: np.ndarray

    def __call__(self, x: np.ndarray, a: int, num_arms: int) -> np.ndarray:
        matches = np.flatnonzero(np.all(self.contexts == np.asarray(x, dtype=float), axis=1))
        if matches.size == 0:
            raise DimensionMismatch("Context vector not present in feature table")
        return self.table[matches[0], a]

    def dim(self, context_dim: int, num_arms: int) -> int:
        return self.table.shape[-1]


@dataclass(frozen=True)
class ContextSet:
    """Finite weighted context set with per-epoch and population distributions.

    Args:
        contexts: (C, p) context vectors
        weights_per_epoch: (T, C) context distribution μ_t for each epoch
        population_weights: (C,) post-experiment distribution μ
    """

    contexts: np.ndarray
    weights_per_epoch: np.ndarray
    population_weights: np.ndarray

    def __post_init__(self):
        contexts = np.atleast_2d(np.asarray(self.contexts, dtype=float))
        per_epoch = np.atleast_2d(np.asarray(self.weights_per_epoch, dtype=float))
        population = np.asarray(self.population_weights, dtype=float)
        object.__setattr__(self, 'contexts', contexts)
        object.__setattr__(self, 'weights_per_epoch', per_epoch)
        object.__setattr__(self, 'population_weights', population)

        num_contexts = contexts.shape[0]
        if per_epoch.shape[1] != num_contexts or population.shape != (num_contexts,):
            raise DimensionMismatch(
                f"Weights do not match {num_contexts} contexts: "
                f"{per_epoch.shape} / {population.shape}"
            )
        for name, weights in [('weights_per_epoch', per_epoch), ('population_weights', population[None, :])]:
            if np.any(weights < 0) or np.any(np.abs(weights.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError(f"'{name}' rows must be probability vectors")

    @property
    def num_contexts(self) -> int:
        return self.contexts.shape[0]

    @property
    def num_epochs(self) -> int:
        return self.weights_per_epoch.shape[0]

    @property
    def context_dim(self) -> int:
        return self.contexts.shape[1]

    @classmethod
    def single(cls, num_epochs: int) -> "ContextSet":
        """Non-contextual set: one context x = 1 for every epoch."""
        return cls(np.ones((1, 1)), np.ones((num_epochs, 1)), np.ones(1))

    @classmethod
    def interval_indicators(cls, num_intervals: int) -> "ContextSet":
        """Context = epoch device: x_t = [1; e_t], μ_t = point mass on t, μ uniform."""
        contexts = np.hstack([np.ones((num_intervals, 1)), np.eye(num_intervals)])
        return cls(contexts, np.eye(num_intervals), np.full(num_intervals, 1.0 / num_intervals))


@dataclass(frozen=True)
class ModelSpec:
    """Parametric reward model.

    Args:
        feature_map: FeatureMap producing the observation rows of one unit
        loss_family: SquaredError or Logistic
        noise_scale: (K,) reward variance s² per arm
        num_arms: K
        dim: d, the parameter dimension
    """

    feature_map: FeatureMap | Callable
    loss_family: LossFamily
    noise_scale: np.ndarray
    num_arms: int
    dim: int

    def __post_init__(self):
        noise = np.broadcast_to(np.asarray(self.noise_scale, dtype=float), (self.num_arms,)).copy()
        object.__setattr__(self, 'noise_scale', noise)
        object.__setattr__(self, 'loss_family', LossFamily(self.loss_family))
        if np.any(noise <= 0):
            raise ValueError("'noise_scale' must be positive for every arm")

    @classmethod
    def build(
        cls,
        feature_map: FeatureMap,
        ctx: ContextSet,
        num_arms: int,
        noise_scale: float | np.ndarray = 1.0,
        loss_family: LossFamily = LossFamily.SQUARED_ERROR,
    ) -> "ModelSpec":
        """Build a ModelSpec whose dimension is read off the feature map."""
        dim = feature_map.dim(ctx.context_dim, num_arms)
        return cls(feature_map, loss_family, noise_scale, num_arms, dim)

    def unit_rows(self, x: np.ndarray, a: int) -> np.ndarray:
        """Observation rows of one unit with context x assigned to arm a, shape (m, d)."""
        rows = np.atleast_2d(np.asarray(self.feature_map(x, a, self.num_arms), dtype=float))
        if rows.shape[1] != self.dim:
            raise DimensionMismatch(f"Feature rows have dimension {rows.shape[1]}, model has {self.dim}")
        return rows

    def feature_tensor(self, ctx: ContextSet) -> np.ndarray:
        """All unit rows, shape (C, K, m, d)."""
        return np.stack([
            np.stack([self.unit_rows(x, a) for a in range(self.num_arms)])
            for x in ctx.contexts
        ])


@dataclass(frozen=True)
class BatchData:
    """Observation rows of one batch.

    A unit contributes one row per observation slot (ranking units show several
    items; every other model has a single slot).
    """

    contexts: np.ndarray
    arms: np.ndarray
    rewards: np.ndarray
    epoch: int
    slots: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, 'contexts', np.asarray(self.contexts, dtype=int))
        object.__setattr__(self, 'arms', np.asarray(self.arms, dtype=int))
        object.__setattr__(self, 'rewards', np.asarray(self.rewards, dtype=float))
        slots = np.zeros_like(self.arms) if self.slots is None else np.asarray(self.slots, dtype=int)
        object.__setattr__(self, 'slots', slots)
        if not (self.contexts.shape == self.arms.shape == self.rewards.shape == slots.shape):
            raise DimensionMismatch("Batch columns have different lengths")

    @classmethod
    def from_rows(cls, rows: list[tuple[int, int, float]], epoch: int) -> "BatchData":
        """Build from (context index, arm index, reward) tuples."""
        if not rows:
            return cls(np.zeros(0, int), np.zeros(0, int), np.zeros(0), epoch)
        contexts, arms, rewards = zip(*rows)
        return cls(np.array(contexts), np.array(arms), np.array(rewards), epoch)

    def __len__(self) -> int:
        return int(self.rewards.shape[0])


@dataclass(frozen=True)
class EstimateSummary:
    """Per-batch ERM summary; hessian and grad_cov are per-row averages."""

    theta_hat: np.ndarray
    hessian: np.ndarray
    grad_cov: np.ndarray
    n_units: int
    converged: bool = field(default=True)


def loss_value(family: LossFamily, y: float, eta: float) -> float:
    """Per-row loss at linear predictor eta."""
    if family == LossFamily.SQUARED_ERROR:
        return (y - eta) ** 2
    # y in {0, 1} cross-entropy, written stably
    return float(np.logaddexp(0.0, eta) - y * eta)


def loss_derivatives(family: LossFamily, y: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of the loss with respect to eta."""
    if family == LossFamily.SQUARED_ERROR:
        return -2.0 * (y - eta), np.full_like(np.asarray(eta, dtype=float), 2.0)
    mu = expit(eta)
    return mu - y, mu * (1.0 - mu)


def loss_gradient(model: ModelSpec, row: np.ndarray, y: float, theta: np.ndarray) -> np.ndarray:
    """∇_θ ℓ(y, rowᵀθ)."""
    d1, _ = loss_derivatives(model.loss_family, np.asarray(y), np.asarray(row @ theta))
    return float(d1) * row


def loss_hessian(model: ModelSpec, row: np.ndarray, y: float, theta: np.ndarray) -> np.ndarray:
    """∇²_θ ℓ(y, rowᵀθ)."""
    _, d2 = loss_derivatives(model.loss_family, np.asarray(y), np.asarray(row @ theta))
    return float(d2) * np.outer(row, row)


def _check_theta(model: ModelSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.dim,):
        raise DimensionMismatch(f"Parameter has shape {theta.shape}, model dimension is {model.dim}")
    return theta


def information_basis(model: ModelSpec, ctx: ContextSet, theta_ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-(context, arm) unit contributions to H and I, each of shape (C, K, d, d).

    SquaredError: H = Σ_rows 2ψψᵀ, I = Σ_rows 4s_a²ψψᵀ.
    Logistic: H = I = Σ_rows σ(1-σ)ψψᵀ at theta_ref (Bernoulli rewards).
    """
    theta_ref = _check_theta(model, theta_ref)
    if not np.all(np.isfinite(theta_ref)):
        raise ValueError("'theta_ref' must be finite")
    features = model.feature_tensor(ctx)
    outer = np.einsum('ckmi,ckmj->ckmij', features, features)
    if model.loss_family == LossFamily.SQUARED_ERROR:
        h_basis = 2.0 * outer.sum(axis=2)
        i_basis = 4.0 * model.noise_scale[None, :, None, None] * outer.sum(axis=2)
    else:
        mu = expit(features @ theta_ref)
        weight = mu * (1.0 - mu)
        h_basis = np.einsum('ckm,ckmij->ckij', weight, outer)
        i_basis = h_basis.copy()
    return h_basis, i_basis


def _check_alloc(model: ModelSpec, ctx: ContextSet, alloc: np.ndarray) -> np.ndarray:
    alloc = np.atleast_2d(np.asarray(alloc, dtype=float))
    if alloc.shape == (1, model.num_arms) and ctx.num_contexts > 1:
        alloc = np.repeat(alloc, ctx.num_contexts, axis=0)
    if alloc.shape != (ctx.num_contexts, model.num_arms):
        raise DimensionMismatch(
            f"Allocation has shape {alloc.shape}, expected {(ctx.num_contexts, model.num_arms)}"
        )
    return alloc


def information_matrices(
    model: ModelSpec,
    ctx: ContextSet,
    epoch: int,
    alloc: np.ndarray,
    theta_ref: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Population Hessian H(p) and gradient covariance I(p) for one epoch.

    Args:
        model: Reward model
        ctx: Context set supplying μ_t
        epoch: Epoch index t selecting μ_t
        alloc: (C, K) allocation rows (a single row is broadcast to every context)
        theta_ref: Reference parameter (the planner passes the posterior mean)

    Returns:
        (H, I), both linear in alloc
    """
    alloc = _check_alloc(model, ctx, alloc)
    h_basis, i_basis = information_basis(model, ctx, theta_ref)
    weights = ctx.weights_per_epoch[epoch]
    h = np.einsum('c,ck,ckij->ij', weights, alloc, h_basis)
    i = np.einsum('c,ck,ckij->ij', weights, alloc, i_basis)
    return 0.5 * (h + h.T), 0.5 * (i + i.T)


def design_matrix(model: ModelSpec, ctx: ContextSet, data: BatchData) -> np.ndarray:
    """Stack the observation row of every batch row, shape (n, d)."""
    features = model.feature_tensor(ctx)
    if np.any(data.arms < 0) or np.any(data.arms >= model.num_arms):
        raise DimensionMismatch("Arm index out of range")
    if np.any(data.contexts < 0) or np.any(data.contexts >= ctx.num_contexts):
        raise DimensionMismatch("Context index out of range")
    return features[data.contexts, data.arms, data.slots]


def fit_batch(
    model: ModelSpec,
    ctx: ContextSet,
    data: BatchData,
    max_iter: int = NEWTON_MAX_ITER,
    tol: float = NEWTON_TOL,
    tol_rank: float = TOL_RANK,
) -> EstimateSummary:
    """Empirical risk minimization on one batch.

    SquaredError solves the normal equations with a pseudoinverse (unidentified
    directions get coefficient 0). Logistic runs Newton's method with
    pseudoinverse steps and warns with NonConvergenceWarning at the cap.

    Raises:
        EmptyBatch: If the batch has no rows
    """
    if len(data) == 0:
        raise EmptyBatch(f"Batch for epoch {data.epoch} has no rows")
    phi = design_matrix(model, ctx, data)
    return fit_rows(model.loss_family, phi, data.rewards, data.epoch, max_iter, tol, tol_rank)


def fit_rows(
    family: LossFamily,
    phi: np.ndarray,
    y: np.ndarray,
    epoch: int = 0,
    max_iter: int = NEWTON_MAX_ITER,
    tol: float = NEWTON_TOL,
    tol_rank: float = TOL_RANK,
) -> EstimateSummary:
    """ERM on an explicit (n, d) design matrix; see ``fit_batch``."""
    n = len(y)
    if n == 0:
        raise EmptyBatch(f"Batch for epoch {epoch} has no rows")
    converged = True

    if family == LossFamily.SQUARED_ERROR:
        theta = pseudo_inverse(phi.T @ phi, tol_rank) @ (phi.T @ y)
    else:
        theta = np.zeros(phi.shape[1])
        for iteration in range(max_iter):
            d1, d2 = loss_derivatives(family, y, phi @ theta)
            grad = phi.T @ d1 / n
            if np.linalg.norm(grad) <= tol:
                break
            hess = (phi * d2[:, None]).T @ phi / n
            theta = theta - pseudo_inverse(hess, tol_rank) @ grad
        else:
            d1, _ = loss_derivatives(family, y, phi @ theta)
            if np.linalg.norm(phi.T @ d1 / n) > tol:
                converged = False
                logger.warning("Newton fit for epoch %d stopped after %d iterations", epoch, max_iter)
                warnings.warn(
                    f"Logistic fit did not converge in {max_iter} iterations",
                    NonConvergenceWarning,
                    stacklevel=2,
                )

    d1, d2 = loss_derivatives(family, y, phi @ theta)
    hessian = (phi * d2[:, None]).T @ phi / n
    grad_cov = (phi * (d1 ** 2)[:, None]).T @ phi / n
    return EstimateSummary(
        theta_hat=theta,
        hessian=0.5 * (hessian + hessian.T),
        grad_cov=0.5 * (grad_cov + grad_cov.T),
        n_units=n,
        converged=converged,
    )


def mean_reward(model: ModelSpec, theta: np.ndarray, x: np.ndarray, a: int) -> float:
    """Expected reward of one unit: Σ_rows ψᵀθ (SquaredError) or Σ_rows σ(ψᵀθ) (Logistic)."""
    theta = _check_theta(model, theta)
    eta = model.unit_rows(x, a) @ theta
    if model.loss_family == LossFamily.LOGISTIC:
        return float(expit(eta).sum())
    return float(eta.sum())


def mean_reward_table(model: ModelSpec, ctx: ContextSet, theta: np.ndarray) -> np.ndarray:
    """Expected reward for every (context, arm), shape (C, K)."""
    theta = _check_theta(model, theta)
    eta = model.feature_tensor(ctx) @ theta
    if model.loss_family == LossFamily.LOGISTIC:
        return expit(eta).sum(axis=-1)
    return eta.sum(axis=-1)


def arm_means(model: ModelSpec, ctx: ContextSet, theta: np.ndarray) -> np.ndarray:
    """Population-averaged arm rewards r̄_a = Σ_x μ(x) r(x, a)."""
    return ctx.population_weights @ mean_reward_table(model, ctx, theta)
