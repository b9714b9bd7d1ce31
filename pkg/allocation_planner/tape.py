"""Minimal reverse-mode differentiation on a recorded operation tape.

Values are numpy arrays wrapped in ``Var``. Operations on variables that
require gradients are appended to the owning ``Tape`` as (output, inputs,
vector-Jacobian product) records; ``Tape.gradient`` replays the records
backwards. Operations whose inputs are all constants are evaluated eagerly and
never recorded, so the same graph-building code doubles as a plain evaluator.

Only the operations the planning graph needs are provided. Each vjp is exact
for the inputs it is used with; ``max_last`` and ``topk_sum_last`` return the
subgradient at the active index (lowest index on ties).
"""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import TOL_PSD
from .linalg import clamped_eigh, pseudo_inverse


@dataclass(eq=False)
class Var:
    value: np.ndarray
    tape: "Tape | None" = None
    requires_grad: bool = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


@dataclass(eq=False)
class _Record:
    output: Var
    inputs: tuple[Var, ...]
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class Tape:
    """Wengert list of recorded operations."""

    def __init__(self):
        self.records: list[_Record] = []

    def variable(self, value: np.ndarray) -> Var:
        return Var(np.array(value, dtype=float), self, True)

    def gradient(self, output: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
        """Adjoints of a scalar output with respect to the given variables."""
        adjoints: dict[int, np.ndarray] = {id(output): np.ones_like(output.value)}
        for record in reversed(self.records):
            g = adjoints.get(id(record.output))
            if g is None:
                continue
            for var, grad in zip(record.inputs, record.vjp(g)):
                if grad is None or not var.requires_grad:
                    continue
                key = id(var)
                adjoints[key] = adjoints[key] + grad if key in adjoints else grad
        return [adjoints.get(id(v), np.zeros_like(v.value)) for v in wrt]


def const(value: np.ndarray | float) -> Var:
    return Var(np.asarray(value, dtype=float))


def _emit(value: np.ndarray, inputs: tuple[Var, ...], vjp: Callable) -> Var:
    tape = next((v.tape for v in inputs if v.requires_grad), None)
    if tape is None:
        return Var(value)
    out = Var(value, tape, True)
    tape.records.append(_Record(out, inputs, vjp))
    return out


def add(a: Var, b: Var) -> Var:
    return _emit(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Var, b: Var) -> Var:
    return _emit(a.value - b.value, (a, b), lambda g: (g, -g))


def scale(a: Var, c: float) -> Var:
    return _emit(c * a.value, (a,), lambda g: (c * g,))


def affine(a: Var, slope: float, shift: float) -> Var:
    return _emit(slope * a.value + shift, (a,), lambda g: (slope * g,))


def matmul(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def symmetrize(a: Var) -> Var:
    return _emit(0.5 * (a.value + a.value.T), (a,), lambda g: (0.5 * (g + g.T),))


def einsum(subscripts: str, *operands: Var) -> Var:
    """Explicit-output einsum; every input index must appear in the output or another operand."""
    inputs, output = subscripts.replace(' ', '').split('->')
    in_subs = inputs.split(',')
    values = [op.value for op in operands]

    def vjp(g):
        grads = []
        for k, op in enumerate(operands):
            if not op.requires_grad:
                grads.append(None)
                continue
            others = [s for j, s in enumerate(in_subs) if j != k]
            other_vals = [v for j, v in enumerate(values) if j != k]
            expr = ','.join([output] + others) + '->' + in_subs[k]
            grads.append(np.einsum(expr, g, *other_vals))
        return tuple(grads)

    return _emit(np.einsum(subscripts, *values), tuple(operands), vjp)


def softmax_rows(a: Var) -> Var:
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    return _emit(p, (a,), lambda g: (p * (g - (g * p).sum(axis=-1, keepdims=True)),))


def sigmoid(a: Var) -> Var:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _emit(s, (a,), lambda g: (g * s * (1.0 - s),))


def inv(a: Var) -> Var:
    y = np.linalg.inv(a.value)
    return _emit(y, (a,), lambda g: (-y.T @ g @ y.T,))


def pinv_sym(a: Var, tol_rank: float) -> Var:
    """Pseudoinverse of a symmetric matrix; the vjp assumes perturbations keep its range."""
    y = pseudo_inverse(a.value, tol_rank)
    return _emit(y, (a,), lambda g: (-y @ g @ y,))


def psd_sqrt(a: Var, tol_psd: float = TOL_PSD) -> Var:
    """Symmetric PSD square root with the eigendecomposition backward rule.

    The Fréchet derivative in the eigenbasis is the Hadamard product with
    1/(√λ_i + √λ_j); pairs of (numerically) null eigenvalues get 0.
    """
    eigvals, eigvecs = clamped_eigh(a.value, tol_psd)
    roots = np.sqrt(eigvals)
    value = (eigvecs * roots) @ eigvecs.T
    value = 0.5 * (value + value.T)

    def vjp(g):
        cutoff = np.sqrt(tol_psd * max(1.0, float(eigvals.max(initial=0.0))))
        active = np.where(roots > cutoff, roots, 0.0)
        denom = active[:, None] + active[None, :]
        weights = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0)
        inner = eigvecs.T @ (0.5 * (g + g.T)) @ eigvecs
        return (eigvecs @ (weights * inner) @ eigvecs.T,)

    return _emit(value, (a,), vjp)


def _first_argmax_mask(x: np.ndarray) -> np.ndarray:
    idx = np.argmax(x, axis=-1)
    mask = np.zeros_like(x)
    np.put_along_axis(mask, idx[..., None], 1.0, axis=-1)
    return mask


def max_last(a: Var) -> Var:
    mask = _first_argmax_mask(a.value)
    return _emit(a.value.max(axis=-1), (a,), lambda g: (mask * g[..., None],))


def topk_mask(x: np.ndarray, k: int) -> np.ndarray:
    """Indicator of the k largest entries along the last axis (ties to lower index)."""
    order = np.argsort(-x, axis=-1, kind='stable')[..., :k]
    mask = np.zeros_like(x)
    np.put_along_axis(mask, order, 1.0, axis=-1)
    return mask


def topk_sum_last(a: Var, k: int) -> Var:
    mask = topk_mask(a.value, k)
    return _emit((mask * a.value).sum(axis=-1), (a,), lambda g: (mask * g[..., None],))


def relu_square(a: Var) -> Var:
    pos = np.maximum(a.value, 0.0)
    return _emit(pos ** 2, (a,), lambda g: (2.0 * pos * g,))


def mean(a: Var) -> Var:
    size = a.value.size
    return _emit(np.asarray(a.value.mean()), (a,), lambda g: (np.full_like(a.value, g / size),))
