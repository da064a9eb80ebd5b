"""MAP-EM for a single Gaussian prior over matrix rows.

Each iteration fits the model to the current completion (M-step) and then
replaces every row by its MAP estimate under that model (E-step). The
first M-step runs on the initial fill.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, EmptyMatrix, TooFewSignals, ValidationError
from .gaussian import CONSTRAINT_ATOL, GaussianModel, NoiseModel, map_estimate
from .linalg import cholesky, quad_form
from .parallel import chunked_map, chunks, resolve_workers

log = logging.getLogger(__name__)

@dataclass(frozen=True)
class EmConfig:
    epsilon: float = 0.3
    iterations: int = 10
    noise: NoiseModel = field(default_factory=NoiseModel)
    init_fill: float = 3.0
    orientation: str = "rows"
    monotonicity_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValidationError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.noise.variance == 0 and self.epsilon == 0:
            raise ValidationError("epsilon must be positive when the noise variance is zero")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValidationError(f"iterations must be a positive integer, got {self.iterations}")
        if self.orientation not in ("rows", "columns"):
            raise ValidationError(f"orientation must be 'rows' or 'columns', got {self.orientation!r}")
        if not np.isfinite(self.init_fill):
            raise ValidationError("init_fill must be finite")

    def echo(self):
        """Flat ``{key: value}`` view for config echoes in output files."""
        d = asdict(self)
        d["noise_var"] = d.pop("noise")["variance"]
        return d


class IterationRecord(NamedTuple):
    iteration: int
    log_posterior: float
    objective: float
    seconds: float
    checksum: str


class EmResult(NamedTuple):
    model: GaussianModel
    completion: np.ndarray
    trace: list


def initialize(observed, config=None):
    """Dense starting matrix: observed ratings, ``init_fill`` elsewhere."""
    config = config or EmConfig()
    if len(observed) == 0:
        raise EmptyMatrix("cannot initialize from a matrix without observations")
    return observed.to_dense(fill=config.init_fill)


def m_step(signals, epsilon, workers=1):
    """Empirical mean and covariance (divisor M) plus ``epsilon * I``.

    Partial sums are taken over fixed row chunks and combined in chunk
    order, so the result is bit-identical for any ``workers``.
    """
    f = np.asarray(signals, dtype=np.float64)
    if f.ndim != 2:
        raise DimensionMismatch("signals must form an M x N array")
    m, n = f.shape
    if m < 1:
        raise TooFewSignals("m_step needs at least one signal")
    total = np.zeros(n)
    for part in chunked_map(lambda c: f[c].sum(axis=0), m, workers):
        total += part
    mean = total / m
    scatter = np.zeros((n, n))

    def outer(c):
        d = f[c] - mean
        return d.T @ d

    for part in chunked_map(outer, m, workers):
        scatter += part
    cov = scatter / m
    cov[np.diag_indices(n)] += epsilon
    return GaussianModel(mean, cov)


def e_step(model, signals, noise=None, workers=1):
    """MAP estimate of every signal under the (read-only) model."""
    noise = noise or NoiseModel()
    out = np.empty((len(signals), model.dim))

    def run(c):
        for i in range(c.start, c.stop):
            out[i] = map_estimate(model, signals[i], noise)

    chunked_map(run, len(signals), workers)
    return out


def total_log_posterior(model, signals, noise, completion, prior_factor=None):
    """Sum of per-signal unnormalized log posteriors (see ``gaussian.log_posterior``)."""
    completion = np.asarray(completion, dtype=np.float64)
    if completion.shape != (len(signals), model.dim):
        raise DimensionMismatch("completion does not match signals and model")
    if prior_factor is None:
        prior_factor = cholesky(model.cov)
    fidelity = 0.0
    for row, s in zip(completion, signals):
        resid = row[s.indices] - s.values
        if noise.variance == 0.0:
            if resid.size and np.max(np.abs(resid)) > CONSTRAINT_ATOL:
                return -np.inf
        else:
            fidelity += float(resid @ resid) / noise.variance
    prior = 0.0
    dev = (completion - model.mean).T
    for c in chunks(dev.shape[1]):
        prior += float(np.sum(quad_form(prior_factor, dev[:, c])))
    return -0.5 * (fidelity + prior)


def em_objective(model, signals, noise, completion, epsilon):
    """Penalized joint log density that the regularized iteration ascends.

    Adds ``-M/2 log|S| - M*epsilon/2 tr(S^-1)`` to the summed log posterior;
    the regularized M-step is the exact maximizer of this in ``(mu, S)``.
    """
    factor = cholesky(model.cov)
    m = len(signals)
    lp = total_log_posterior(model, signals, noise, completion, factor)
    inv_diag = quad_form(factor, np.eye(model.dim))
    return lp - 0.5 * m * factor.log_det() - 0.5 * m * epsilon * float(np.sum(inv_diag))


def run_em(observed, config=None, workers=None, track=True, on_iteration=None):
    """Complete ``observed`` with ``config.iterations`` rounds of MAP-EM.

    Returns ``(model, completion, trace)``; with ``orientation="columns"``
    the signals are the matrix columns but the completion keeps the input
    orientation. ``track=False`` skips the per-iteration log posterior.
    ``on_iteration(record, model, completion)`` is called after every
    E-step with the completion in signal orientation; it must not modify it.
    """
    config = config or EmConfig()
    workers = resolve_workers(workers)
    work = observed.transpose() if config.orientation == "columns" else observed
    signals = work.signals()
    current = initialize(work, config)
    trace = []
    model = None
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        model = m_step(current, config.epsilon, workers)
        current = e_step(model, signals, config.noise, workers)
        seconds = time.perf_counter() - t0
        lp = obj = float("nan")
        if track:
            lp = total_log_posterior(model, signals, config.noise, current)
            obj = em_objective(model, signals, config.noise, current, config.epsilon)
        rec = IterationRecord(it, lp, obj, seconds, model.checksum())
        log.info("iteration %d: log posterior %.6g, objective %.6g (%.2fs)", it, lp, obj, seconds)
        if trace and track and lp < trace[-1].log_posterior - config.monotonicity_tolerance * abs(
            trace[-1].log_posterior
        ):
            log.warning("log posterior decreased at iteration %d", it)
        trace.append(rec)
        if on_iteration is not None:
            on_iteration(rec, model, current)
    completion = current.T.copy() if config.orientation == "columns" else current
    return EmResult(model, completion, trace)
