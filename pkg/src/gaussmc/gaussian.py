"""Gaussian prior, masked signals and the closed-form MAP estimate.

A signal is one row of the rating matrix. Its mask is kept as the sorted
index array of observed coordinates; applying the extraction operator (or
its transpose) is plain fancy indexing, so every solve happens in the
reduced dimension ``N_i``.
"""
import hashlib
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, ValidationError
from .linalg import (
    PIVOT_RTOL,
    backward_kernel,
    cholesky,
    cholesky_kernel,
    forward_kernel,
    quad_form,
    symmetric,
)

#: Absolute tolerance of the hard constraint ``f[indices] == values`` under zero noise.
CONSTRAINT_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Mean vector and symmetric positive-definite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(-1)
        cov = symmetric(self.cov)
        if cov.shape[0] != mean.shape[0]:
            raise DimensionMismatch(
                f"mean has length {mean.shape[0]} but covariance is {cov.shape[0]}x{cov.shape[0]}"
            )
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.shape[0]

    def checksum(self):
        """SHA-256 over the raw little-endian bytes of mean and covariance."""
        h = hashlib.sha256()
        h.update(self.mean.astype("<f8").tobytes())
        h.update(self.cov.astype("<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class MaskedSignal:
    """Observed sub-vector ``values`` of a length-``full_dim`` signal at ``indices``."""

    full_dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).reshape(-1)
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if idx.shape != vals.shape:
            raise DimensionMismatch("indices and values must have the same length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.full_dim or np.any(np.diff(idx) <= 0):
                raise ValidationError("indices must be strictly increasing within [0, full_dim)")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @property
    def n_observed(self):
        return self.indices.shape[0]

    @classmethod
    def from_dense(cls, row, mask):
        """Build from a full row and a boolean mask of observed entries."""
        row = np.asarray(row, dtype=np.float64)
        idx = np.flatnonzero(mask)
        return cls(row.shape[0], idx, row[idx])


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise ``w ~ N(0, variance * I)``; ``variance == 0`` means noiseless."""

    variance: float = 0.0

    def __post_init__(self):
        if not self.variance >= 0.0:
            raise ValidationError(f"noise variance must be nonnegative, got {self.variance}")

    @property
    def kind(self):
        return "zero" if self.variance == 0.0 else "isotropic"

    @classmethod
    def zero(cls):
        return cls(0.0)

    @classmethod
    def isotropic(cls, variance):
        return cls(float(variance))


ZERO_NOISE = NoiseModel()


def _check(model, signal):
    if signal.full_dim != model.dim:
        raise DimensionMismatch(
            f"signal has dimension {signal.full_dim}, model has dimension {model.dim}"
        )


@numba.njit(cache=True, nogil=True)
def _map_kernel(mean, cov, idx, values, noise_var):
    k = idx.shape[0]
    # Lower triangle of cov[idx, idx] + noise_var * I; the factorization reads nothing else.
    system = np.empty((k, k))
    top = 0.0
    for a in range(k):
        ra = idx[a]
        for b in range(a + 1):
            system[a, b] = cov[ra, idx[b]]
        system[a, a] += noise_var
        top = max(top, system[a, a])
    low, failed = cholesky_kernel(system, PIVOT_RTOL * top)
    if failed >= 0:
        return mean.copy(), failed
    resid = np.empty(k)
    for a in range(k):
        resid[a] = values[a] - mean[idx[a]]
    alpha = backward_kernel(low, forward_kernel(low, resid))
    # cov[:, idx] @ alpha, read as rows of the symmetric cov.
    out = mean.copy()
    n = mean.shape[0]
    for a in range(k):
        ra = idx[a]
        w = alpha[a]
        for j in range(n):
            out[j] += w * cov[ra, j]
    return out, -1


def map_estimate(model, signal, noise=ZERO_NOISE):
    """MAP estimate of the full signal given its observed entries.

    Computes ``mu + S[:, o] (S[o, o] + s2 I)^{-1} (y - mu[o])`` where ``o``
    are the observed indices. One Cholesky solve of size ``N_i``.

    Parameters
    ----------
    model : GaussianModel
    signal : MaskedSignal
    noise : NoiseModel

    Returns
    -------
    numpy.ndarray, shape (N,)
    """
    _check(model, signal)
    idx = signal.indices
    if idx.size == 0:
        return model.mean.copy()
    out, failed = _map_kernel(model.mean, model.cov, idx, signal.values, noise.variance)
    if failed >= 0:
        raise NotPositiveDefinite(
            f"observed covariance block is not positive definite (pivot {failed}); "
            "increase the covariance regularization",
            pivot_index=int(failed),
        )
    return out


def log_posterior(model, signal, noise, f, prior_factor=None):
    """Unnormalized log posterior ``-(fidelity + prior quadratic form) / 2``.

    Under zero noise the fidelity term is a hard constraint: 0 when
    ``f[indices]`` matches ``values`` within ``CONSTRAINT_ATOL``, else the
    result is ``-inf``. ``prior_factor`` may pass a precomputed Cholesky
    factor of ``model.cov``.
    """
    _check(model, signal)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (model.dim,):
        raise DimensionMismatch(f"f has shape {f.shape}, expected ({model.dim},)")
    resid = f[signal.indices] - signal.values
    if noise.variance == 0.0:
        if resid.size and np.max(np.abs(resid)) > CONSTRAINT_ATOL:
            return -np.inf
        fidelity = 0.0
    else:
        fidelity = float(resid @ resid) / noise.variance
    if prior_factor is None:
        prior_factor = cholesky(model.cov)
    prior = float(quad_form(prior_factor, f - model.mean))
    return -0.5 * (fidelity + prior)
