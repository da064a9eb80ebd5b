"""Synthetic rating matrices drawn from a known Gaussian."""
from dataclasses import dataclass

import numpy as np

from .data import SparseRatingMatrix
from .errors import ValidationError
from .gaussian import GaussianModel


@dataclass(frozen=True, eq=False)
class SyntheticData:
    observed: SparseRatingMatrix
    truth: np.ndarray
    model: GaussianModel


def synthetic_model(n_items, rank=3, scale=1.0, diag_var=0.1, center=3.0, spread=0.5, rng=None):
    """Low-rank-plus-diagonal covariance ``W W^T + diag_var I`` and a mean around ``center``.

    ``W`` has iid ``N(0, scale^2 / rank)`` entries, so every item has
    prior variance about ``scale^2 + diag_var``.
    """
    rng = np.random.default_rng(rng)
    if rank < 0 or rank > n_items:
        raise ValidationError(f"rank must lie in [0, {n_items}], got {rank}")
    w = rng.normal(0.0, scale / np.sqrt(max(rank, 1)), size=(n_items, rank))
    mean = center + rng.uniform(-spread, spread, size=n_items)
    return GaussianModel(mean, w @ w.T + diag_var * np.eye(n_items))


def generate(n_users, n_items, density=0.5, rank=3, scale=1.0, diag_var=0.1, seed=None):
    """Sample ``n_users`` rows from :func:`synthetic_model` and mask them.

    Each entry is observed independently with probability ``density``.
    """
    if not 0.0 < density <= 1.0:
        raise ValidationError(f"density must lie in (0, 1], got {density}")
    if n_users < 1 or n_items < 1:
        raise ValidationError("n_users and n_items must be positive")
    rng = np.random.default_rng(seed)
    model = synthetic_model(n_items, rank, scale, diag_var, rng=rng)
    factor = np.linalg.cholesky(model.cov)
    truth = model.mean + rng.standard_normal((n_users, n_items)) @ factor.T
    mask = np.ones_like(truth, dtype=bool) if density == 1.0 else rng.random(truth.shape) < density
    u, i = np.nonzero(mask)
    lo, hi = float(truth[mask].min()), float(truth[mask].max())
    observed = SparseRatingMatrix(n_users, n_items, u, i, truth[mask], (lo, hi))
    return SyntheticData(observed, truth, model)
