"""Dense symmetric linear algebra: Cholesky factorization and SPD solves.

Symmetric matrices are plain ``float64`` ndarrays. :func:`symmetric` builds
one from any square array by mirroring the upper triangle, which makes
``a[i, j] == a[j, i]`` hold exactly.

The kernels are compiled with numba (no BLAS), so the flop count and the
bit pattern of a result depend only on the input. They are importable so
other compiled code can factor without a Python round trip.
"""
from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite

#: Pivots at or below ``PIVOT_RTOL * max(diag(a))`` are rejected.
PIVOT_RTOL = 1e-12


@numba.njit(cache=True, nogil=True)
def cholesky_kernel(a, threshold):
    # Row-by-row (Cholesky-Banachiewicz); inner products run over contiguous
    # rows of the row-major factor.
    n = a.shape[0]
    low = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= low[i, k] * low[j, k]
            if i == j:
                if not s > threshold:
                    return low, i
                low[i, i] = np.sqrt(s)
            else:
                low[i, j] = s / low[j, j]
    return low, -1


@numba.njit(cache=True, nogil=True)
def forward_kernel(low, b):
    n = low.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= low[i, k] * y[k]
        y[i] = s / low[i, i]
    return y


@numba.njit(cache=True, nogil=True)
def backward_kernel(low, y):
    # Solves L^T x = y without forming the transpose.
    n = low.shape[0]
    x = y.copy()
    for i in range(n - 1, -1, -1):
        x[i] /= low[i, i]
        xi = x[i]
        for k in range(i):
            x[k] -= low[i, k] * xi
    return x


def symmetric(a):
    """Return a float64 copy of square ``a`` with the upper triangle mirrored."""
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1:
        raise DimensionMismatch("matrix dimension must be at least 1")
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Lower-triangular ``L`` with positive diagonal such that ``A = L L^T``."""

    lower: np.ndarray

    @property
    def dim(self):
        return self.lower.shape[0]

    def reconstruct(self):
        return self.lower @ self.lower.T

    def log_det(self):
        """``log |A|`` of the factored matrix."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def cholesky(a):
    """Factor a symmetric positive-definite matrix.

    Only the lower triangle of ``a`` is read.

    Parameters
    ----------
    a : array_like, shape (n, n)

    Returns
    -------
    CholeskyFactor

    Raises
    ------
    NotPositiveDefinite
        If a pivot is ``<= 1e-12 * max(diag(a))``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    threshold = PIVOT_RTOL * max(float(np.max(np.diag(a))), 0.0)
    low, failed = cholesky_kernel(a, threshold)
    if failed >= 0:
        raise NotPositiveDefinite(
            f"matrix is not positive definite (pivot {failed} <= {threshold:.3g}); "
            "increase the covariance regularization",
            pivot_index=int(failed),
        )
    return CholeskyFactor(low)


def _check_rhs(factor, b):
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != factor.dim or b.ndim not in (1, 2):
        raise DimensionMismatch(
            f"right-hand side of shape {b.shape} does not match factor of dim {factor.dim}"
        )
    return np.ascontiguousarray(b)


def solve_lower(factor, b):
    """Forward substitution ``L y = b``.

    A 2-D ``b`` is solved column-wise through LAPACK's triangular solver;
    that path only serves bulk quadratic forms.
    """
    b = _check_rhs(factor, b)
    if b.ndim == 2:
        return scipy.linalg.solve_triangular(factor.lower, b, lower=True, check_finite=False)
    return forward_kernel(factor.lower, b)


def solve_spd(factor, b):
    """Solve ``A x = b`` given ``factor`` of ``A`` (forward then backward substitution)."""
    b = _check_rhs(factor, b)
    if b.ndim != 1:
        raise DimensionMismatch("solve_spd expects a vector right-hand side")
    return backward_kernel(factor.lower, forward_kernel(factor.lower, b))


def quad_form(factor, v):
    """``v^T A^{-1} v`` for each column of ``v`` (or for vector ``v``)."""
    z = solve_lower(factor, v)
    return np.sum(z * z, axis=0)
