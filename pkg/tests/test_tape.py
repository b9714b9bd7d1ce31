"""Tests for reverse-mode differentiation on the operation tape."""

import numpy as np
import pytest

from allocation_planner import tape as tp


def numeric_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (f(up) - f(down)) / (2 * h)
    return grad


def check_gradient(build, x: np.ndarray, rtol: float = 1e-5, atol: float = 1e-7):
    """Compare the tape gradient of a scalar graph with central differences."""
    tape = tp.Tape()
    var = tape.variable(x)
    out = build(var)
    (grad,) = tape.gradient(out, [var])
    numeric = numeric_gradient(lambda v: float(build(tp.const(v)).value), x)
    assert np.allclose(grad, numeric, rtol=rtol, atol=atol)


def spd(seed: int, dim: int) -> np.ndarray:
    a = np.random.default_rng(seed).standard_normal((dim, dim))
    return a @ a.T + dim * np.eye(dim)


def weighted_sum(v: tp.Var, seed: int = 99) -> tp.Var:
    w = np.random.default_rng(seed).standard_normal(v.shape)
    return tp.einsum('ij,ij->', v, tp.const(w)) if v.value.ndim == 2 else tp.einsum('i,i->', v, tp.const(w))


class TestTape:
    """Test cases for Tape bookkeeping."""

    def test_constants_are_not_recorded(self):
        """Test that constant-only operations are evaluated eagerly."""
        out = tp.add(tp.const(np.ones(2)), tp.const(np.ones(2)))
        assert out.tape is None
        assert np.array_equal(out.value, [2.0, 2.0])

    def test_adjoints_accumulate_over_reuse(self):
        """Test that a variable used twice gets both contributions."""
        tape = tp.Tape()
        x = tape.variable(np.array([3.0]))
        out = tp.mean(tp.add(tp.scale(x, 2.0), x))
        assert tape.gradient(out, [x])[0] == pytest.approx([3.0])

    def test_unused_variable_gets_zero(self):
        """Test that a variable outside the graph has zero adjoint."""
        tape = tp.Tape()
        x, y = tape.variable(np.ones(2)), tape.variable(np.ones(3))
        grads = tape.gradient(tp.mean(x), [x, y])
        assert np.array_equal(grads[1], np.zeros(3))


class TestOperationGradients:
    """Test cases comparing every vjp with finite differences."""

    def test_matmul_and_symmetrize(self):
        """Test the matmul and symmetrize rules."""
        b = np.random.default_rng(1).standard_normal((3, 3))
        check_gradient(lambda v: weighted_sum(tp.symmetrize(tp.matmul(v, tp.const(b)))),
                       np.random.default_rng(2).standard_normal((3, 3)))

    def test_einsum_contraction(self):
        """Test the einsum rule on a weighted basis contraction."""
        basis = np.random.default_rng(3).standard_normal((2, 3, 4, 4))
        weights = np.array([0.3, 0.7])
        check_gradient(
            lambda v: weighted_sum(tp.einsum('c,ck,ckij->ij', tp.const(weights), v, tp.const(basis))),
            np.random.default_rng(4).random((2, 3)),
        )

    def test_softmax_rows(self):
        """Test the softmax rule row by row."""
        check_gradient(lambda v: weighted_sum(tp.softmax_rows(v)), np.random.default_rng(5).standard_normal((2, 4)))

    def test_sigmoid(self):
        """Test the sigmoid rule."""
        check_gradient(lambda v: weighted_sum(tp.sigmoid(v)), np.linspace(-3.0, 3.0, 5))

    def test_inverse(self):
        """Test the matrix inverse rule."""
        check_gradient(lambda v: weighted_sum(tp.inv(v)), spd(6, 3))

    def test_symmetric_pseudo_inverse(self):
        """Test the pseudoinverse rule for a full-rank symmetric input."""
        check_gradient(lambda v: weighted_sum(tp.pinv_sym(tp.symmetrize(v), 1e-10)), spd(7, 3))

    def test_psd_sqrt(self):
        """Test the square root rule on a well-conditioned SPD matrix."""
        check_gradient(lambda v: weighted_sum(tp.psd_sqrt(tp.symmetrize(v))), spd(8, 3))

    def test_psd_sqrt_null_eigenvalues_get_zero(self):
        """Test that the square root rule stays finite on a singular input."""
        tape = tp.Tape()
        x = tape.variable(np.diag([1.0, 0.0]))
        out = weighted_sum(tp.psd_sqrt(x))
        (grad,) = tape.gradient(out, [x])
        assert np.all(np.isfinite(grad))
        assert grad[1, 1] == 0.0

    def test_max_and_topk(self):
        """Test that max and top-k sums route gradients to the active entries."""
        x = np.array([[0.1, 0.9, 0.5], [0.7, 0.2, 0.3]])
        tape = tp.Tape()
        v = tape.variable(x)
        out = tp.mean(tp.add(tp.max_last(v), tp.topk_sum_last(v, 2)))
        (grad,) = tape.gradient(out, [v])
        assert np.allclose(grad, [[0.0, 1.0, 0.5], [1.0, 0.0, 0.5]])

    def test_topk_ties_go_to_lower_index(self):
        """Test that ties are broken toward the lower index."""
        assert np.array_equal(tp.topk_mask(np.array([1.0, 2.0, 2.0, 0.0]), 1), [0.0, 1.0, 0.0, 0.0])

    def test_relu_square(self):
        """Test the squared hinge rule."""
        check_gradient(lambda v: tp.mean(tp.relu_square(v)), np.array([-1.0, 0.5, 2.0]))

    def test_affine_chain(self):
        """Test a chain of affine, sub and scale."""
        check_gradient(lambda v: tp.mean(tp.sub(tp.affine(v, 0.8, 0.05), tp.scale(v, 0.3))), np.arange(3.0))
