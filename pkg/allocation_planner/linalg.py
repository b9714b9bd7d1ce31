"""Symmetric matrix primitives: PSD square root, pseudoinverse and SPD solves.

Every routine goes through the symmetric eigendecomposition (``scipy.linalg.eigh``)
except ``spd_solve``, which uses a jittered Cholesky factorization. Posterior
covariance differences and information products are routinely rank-deficient,
so clamping and rank truncation are part of the contract rather than errors.
"""

import numpy as np
from scipy import linalg

from .config import SOLVE_JITTER, SYMMETRY_TOL, TOL_PSD, TOL_RANK
from .errors import DimensionMismatch, IndefiniteMatrix, NotSymmetric, SingularMatrix


def _scale(m: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0


def symmetrize(m: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Return (m + mᵀ)/2 after checking m is square and symmetric within tolerance.

    Args:
        m: Square matrix
        tol: Allowed asymmetry relative to max(1, max|m|)

    Raises:
        DimensionMismatch: If m is not a square 2-D array
        NotSymmetric: If max|m - mᵀ| exceeds tol * max(1, max|m|)
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > tol * _scale(m):
        raise NotSymmetric(f"Matrix asymmetry {asym:.3e} exceeds tolerance")
    return 0.5 * (m + m.T)


def clamped_eigh(m: np.ndarray, tol_psd: float = TOL_PSD) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a PSD matrix with tiny negative eigenvalues clamped to 0.

    Returns:
        (eigenvalues, eigenvectors) with eigenvalues >= 0

    Raises:
        IndefiniteMatrix: If an eigenvalue is below -tol_psd * max(1, max|m|)
    """
    m = symmetrize(m)
    if m.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    eigvals, eigvecs = linalg.eigh(m)
    threshold = tol_psd * _scale(m)
    if eigvals[0] < -threshold:
        raise IndefiniteMatrix(f"Eigenvalue {eigvals[0]:.3e} below -{threshold:.3e}")
    return np.clip(eigvals, 0.0, None), eigvecs


def psd_sqrt(m: np.ndarray, tol_psd: float = TOL_PSD) -> np.ndarray:
    """Symmetric PSD square root S with S·S ≈ m.

    Args:
        m: Symmetric PSD matrix
        tol_psd: Clamping tolerance relative to max(1, max|m|)

    Returns:
        Symmetric PSD square root
    """
    eigvals, eigvecs = clamped_eigh(m, tol_psd)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (root + root.T)


def pseudo_inverse(m: np.ndarray, tol_rank: float = TOL_RANK) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric matrix.

    Eigenvalues with |λ| <= tol_rank * max|λ| are treated as zero.
    """
    m = symmetrize(m)
    if m.size == 0:
        return m.copy()
    eigvals, eigvecs = linalg.eigh(m)
    top = float(np.max(np.abs(eigvals)))
    if top == 0.0:
        return np.zeros_like(m)
    keep = np.abs(eigvals) > tol_rank * top
    inv_vals = np.zeros_like(eigvals)
    inv_vals[keep] = 1.0 / eigvals[keep]
    result = (eigvecs * inv_vals) @ eigvecs.T
    return 0.5 * (result + result.T)


def spd_solve(m: np.ndarray, b: np.ndarray, jitter: float = SOLVE_JITTER) -> np.ndarray:
    """Solve m x = b for symmetric positive definite m.

    A diagonal jitter of ``jitter * trace(m)/d`` is added before the Cholesky
    factorization.

    Raises:
        SingularMatrix: If the factorization fails after jitter
    """
    m = symmetrize(m)
    b = np.asarray(b, dtype=float)
    d = m.shape[0]
    if b.shape[0] != d:
        raise DimensionMismatch(f"Right-hand side has {b.shape[0]} rows, matrix has {d}")
    shift = jitter * float(np.trace(m)) / d if d else 0.0
    try:
        factor = linalg.cho_factor(m + shift * np.eye(d), lower=True)
    except linalg.LinAlgError as e:
        raise SingularMatrix(f"Cholesky factorization failed: {e}") from e
    return linalg.cho_solve(factor, b)


def loewner_excess(a: np.ndarray, b: np.ndarray) -> float:
    """Largest eigenvalue of a - b; <= 0 means a ⪯ b in the Loewner order."""
    diff = symmetrize(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), tol=np.inf)
    if diff.size == 0:
        return 0.0
    return float(linalg.eigvalsh(diff)[-1])
