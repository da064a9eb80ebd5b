"""Rating post-processing, MAE/NMAE scoring and the two benchmark protocols."""
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .em import EmConfig, run_em
from .errors import EmptyPredictions, LengthMismatch, ValidationError
from .gaussian import GaussianModel, MaskedSignal, map_estimate
from .parallel import chunked_map

#: NMAE normalizers for which uniform random guessing scores 1.
EACHMOVIE_FACTOR = 1.944
MOVIELENS_FACTOR = 1.6
_KNOWN_FACTORS = {5: MOVIELENS_FACTOR, 6: EACHMOVIE_FACTOR}


def random_guess_mae(n_levels):
    """Expected ``|X - Y|`` for independent uniform X, Y on ``n_levels`` consecutive integers."""
    k = int(n_levels)
    return (k * k - 1) / (3.0 * k)


def default_factor(rating_range):
    """NMAE normalizer for an integer rating scale.

    The 5- and 6-level scales return the published constants; other
    scales use the uniform random-guess MAE, which those constants round.
    """
    lo, hi = rating_range
    levels = int(round(hi - lo)) + 1
    return _KNOWN_FACTORS.get(levels, random_guess_mae(levels))


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def postprocess(prediction, rating_range):
    """Round to the nearest integer (ties away from zero) and clamp to the range."""
    lo, hi = rating_range
    return int(np.clip(_round_half_away(float(prediction)), lo, hi))


def postprocess_array(predictions, rating_range):
    lo, hi = rating_range
    return np.clip(_round_half_away(np.asarray(predictions, dtype=np.float64)), lo, hi)


@dataclass(frozen=True)
class EvalReport:
    """Scores of one run, or the average over several (``runs > 1``).

    ``nmae`` is always ``mae / normalization_factor``.
    """

    mae: float
    nmae: float
    normalization_factor: float
    n_predictions: int
    runs: int = 1
    per_run_mae: tuple = ()
    per_run_nmae: tuple = ()
    seeds: tuple = ()
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)
    trace: tuple = field(default=(), compare=False, repr=False)

    def as_dict(self):
        d = {
            "mae": self.mae,
            "nmae": self.nmae,
            "factor": self.normalization_factor,
            "n_predictions": self.n_predictions,
            "runs": self.runs,
            "seeds": ",".join(str(s) for s in self.seeds),
            "per_run_mae": ",".join(repr(v) for v in self.per_run_mae),
            "per_run_nmae": ",".join(repr(v) for v in self.per_run_nmae),
            "wall_time": self.wall_time,
        }
        d.update(self.extra)
        return d


def nmae(predictions, truths, factor):
    """MAE of ``predictions`` against ``truths`` and its normalized value."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(truths, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions for {t.size} truths")
    if p.size == 0:
        raise EmptyPredictions("no predictions to score")
    if not factor > 0:
        raise ValidationError(f"normalization factor must be positive, got {factor}")
    mae = float(np.mean(np.abs(p - t)))
    return EvalReport(mae, mae / factor, float(factor), int(p.size),
                      per_run_mae=(mae,), per_run_nmae=(mae / factor,))


def average_reports(reports, seeds=()):
    """Average per-run MAE; the combined NMAE is derived from it."""
    reports = list(reports)
    if not reports:
        raise EmptyPredictions("no runs to average")
    factors = {r.normalization_factor for r in reports}
    if len(factors) != 1:
        raise ValidationError("runs use different normalization factors")
    factor = factors.pop()
    maes = tuple(r.mae for r in reports)
    mae = float(np.mean(maes))
    return EvalReport(
        mae, mae / factor, factor, sum(r.n_predictions for r in reports), len(reports),
        maes, tuple(r.nmae for r in reports), tuple(seeds),
        float(sum(r.wall_time for r in reports)),
    )


def _score(raw, truths, factor, rating_range, rounding):
    preds = postprocess_array(raw, rating_range) if rounding else np.asarray(raw)
    return nmae(preds, truths, factor)


def evaluate_weak(split, config=None, factor=None, workers=None, rounding=True, track=False):
    """Train on ``split.train`` and score its completion at the held-out entries.

    With ``track`` the EM trace is attached to the report.
    """
    config = config or EmConfig()
    rng_ = split.train.rating_range
    factor = default_factor(rng_) if factor is None else factor
    t0 = time.perf_counter()
    result = run_em(split.train, config, workers, track=track)
    raw = result.completion[split.test.users, split.test.items]
    report = _score(raw, split.test.ratings, factor, rng_, rounding)
    return replace(report, wall_time=time.perf_counter() - t0, trace=tuple(result.trace))


def predict_users(model, observed, requests, noise=None, workers=1):
    """Raw MAP predictions for ``requests`` under a fixed model.

    ``observed`` and ``requests`` are :class:`~gaussmc.data.Triplets`
    (request ratings are ignored). Each distinct requesting user gets one
    MAP estimate from its own observed ratings; a user without any gets
    the prior mean.
    """
    noise = noise if noise is not None else EmConfig().noise
    o_order = np.lexsort((observed.items, observed.users))
    o_users = observed.users[o_order]
    o_items, o_ratings = observed.items[o_order], observed.ratings[o_order]
    r_order = np.argsort(requests.users, kind="stable")
    r_users = requests.users[r_order]
    users, r_starts = np.unique(r_users, return_index=True)
    r_stops = np.append(r_starts[1:], r_users.size)
    o_starts = np.searchsorted(o_users, users, side="left")
    o_stops = np.searchsorted(o_users, users, side="right")
    out = np.empty(len(requests))

    def run(c):
        for k in range(c.start, c.stop):
            sl = slice(o_starts[k], o_stops[k])
            est = map_estimate(model, MaskedSignal(model.dim, o_items[sl], o_ratings[sl]), noise)
            pos = r_order[r_starts[k]:r_stops[k]]
            out[pos] = est[requests.items[pos]]

    chunked_map(run, users.size, workers)
    return out


class StrongPrediction(NamedTuple):
    model: GaussianModel
    predictions: np.ndarray
    trace: list


def predict_strong(split, config=None, workers=None, track=False):
    """Fit on the training users, then predict held-out test ratings with the model frozen.

    ``predictions`` are raw estimates aligned with ``split.test_heldout``.
    """
    config = config or EmConfig()
    if config.orientation != "rows":
        raise ValidationError("strong generalization needs row signals (one signal per user)")
    fitted = run_em(split.train_users, config, workers, track=track)
    raw = predict_users(fitted.model, split.test_observed, split.test_heldout, config.noise,
                        workers)
    return StrongPrediction(fitted.model, raw, fitted.trace)


def evaluate_strong(split, config=None, factor=None, workers=None, rounding=True, track=False):
    """Score the frozen training model on the test users' held-out ratings."""
    rng_ = split.source.rating_range
    factor = default_factor(rng_) if factor is None else factor
    t0 = time.perf_counter()
    pred = predict_strong(split, config, workers, track)
    report = _score(pred.predictions, split.test_heldout.ratings, factor, rng_, rounding)
    return replace(report, wall_time=time.perf_counter() - t0, trace=tuple(pred.trace))


def mean_fill(train):
    """Item-mean predictions for every cell; items without ratings get the global mean."""
    sums = np.bincount(train.items, weights=train.ratings, minlength=train.n_items)
    counts = np.bincount(train.items, minlength=train.n_items)
    overall = float(np.mean(train.ratings))
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), overall)
    return means


def baseline_weak(split, factor=None, rounding=True):
    """Mean-fill baseline scored like :func:`evaluate_weak`."""
    rng_ = split.train.rating_range
    factor = default_factor(rng_) if factor is None else factor
    raw = mean_fill(split.train)[split.test.items]
    return _score(raw, split.test.ratings, factor, rng_, rounding)


def baseline_strong(split, factor=None, rounding=True):
    rng_ = split.source.rating_range
    factor = default_factor(rng_) if factor is None else factor
    raw = mean_fill(split.train_users)[split.test_heldout.items]
    return _score(raw, split.test_heldout.ratings, factor, rng_, rounding)
