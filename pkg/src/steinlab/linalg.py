"""Small dense symmetric linear algebra: max norms, eigendecomposition,
inverse square root, whitening.

Everything here operates on dimensions of at most a few dozen (the bound
evaluators never see more), so a dependency-free cyclic Jacobi
eigendecomposition is both adequate and easy to trust.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

DEFAULT_PD_TOL = 1e-10
SYMMETRY_RTOL = 1e-12


def max_abs_norm(a) -> float:
    """Maximum absolute entry of a vector or matrix.

    This is the norm convention used throughout the bound formulas:
    ``||a|| = max_i |a_i|`` for vectors and ``max_ij |a_ij]`` for matrices.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a)))


def symmetrize(a: np.ndarray, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Average ``a`` with its transpose, checking it was symmetric to begin with.

    Guards against asymmetry accumulated by floating point when covariance
    matrices are assembled from estimated sums.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionMismatch("matrix has nonfinite entries")
    scale = max(max_abs_norm(a), 1.0)
    if max_abs_norm(a - a.T) > rtol * scale:
        raise DimensionMismatch("matrix is not symmetric within tolerance")
    return 0.5 * (a + a.T)


def jacobi_eigh(a: np.ndarray, sweeps: int = 64, tol: float = 1e-14):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, vectors)`` with columns of ``vectors`` the
    eigenvectors, unsorted. Robust at the small dimensions used here.
    """
    a = symmetrize(a)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    scale = max(max_abs_norm(a), np.finfo(float).tiny)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 0.5 * tol * scale / n:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    return a.diagonal().copy(), v


def inverse_sqrt(sigma: np.ndarray, tol: float = DEFAULT_PD_TOL) -> np.ndarray:
    """Symmetric inverse square root ``M`` with ``M @ sigma @ M = I``.

    Computed by Jacobi eigendecomposition with eigenvalue
    reciprocal-square-roots.

    Raises
    ------
    NotPositiveDefinite
        If any eigenvalue is at most ``tol`` times the largest one, which
        signals the matrix is unusable for whitening.
    """
    vals, vecs = jacobi_eigh(sigma)
    top = float(np.max(vals)) if vals.size else 0.0
    if top <= 0.0 or np.any(vals <= tol * top):
        raise NotPositiveDefinite(
            f"eigenvalues {np.sort(vals)} fail the relative threshold {tol}"
        )
    m = (vecs * (1.0 / np.sqrt(vals))) @ vecs.T
    return 0.5 * (m + m.T)


def spectral_max_abs(sigma_isqrt: np.ndarray) -> float:
    """Largest absolute eigenvalue of a symmetric matrix (diagnostic norm)."""
    vals, _ = jacobi_eigh(np.array(sigma_isqrt, dtype=float))
    return float(np.max(np.abs(vals))) if vals.size else 0.0


def whiten(samples: np.ndarray, lam: np.ndarray, isqrt: np.ndarray) -> np.ndarray:
    """Map each row ``w`` of ``samples`` to ``isqrt @ (w - lam)``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    lam = np.asarray(lam, dtype=float).reshape(-1)
    isqrt = np.asarray(isqrt, dtype=float)
    p = lam.shape[0]
    if samples.shape[1] != p or isqrt.shape != (p, p):
        raise DimensionMismatch(
            f"samples {samples.shape}, lambda {lam.shape}, isqrt {isqrt.shape}"
        )
    return (samples - lam) @ isqrt.T
