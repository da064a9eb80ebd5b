from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaussmc import synth
from gaussmc.data import SparseRatingMatrix, Triplets, split_strong, split_weak
from gaussmc.em import EmConfig, run_em
from gaussmc.errors import EmptyPredictions, LengthMismatch, ValidationError
from gaussmc.evaluation import (
    EACHMOVIE_FACTOR,
    MOVIELENS_FACTOR,
    average_reports,
    baseline_weak,
    default_factor,
    evaluate_strong,
    evaluate_weak,
    mean_fill,
    nmae,
    postprocess,
    postprocess_array,
    predict_strong,
    predict_users,
    random_guess_mae,
)


def hand_em(values, eps=0.3, iterations=10, fill=3.0):
    """Direct transcription of the iteration on a small dense matrix with NaN holes."""
    observed = ~np.isnan(values)
    f = np.where(observed, values, fill)
    m, n = f.shape
    for _ in range(iterations):
        mu = f.mean(axis=0)
        d = f - mu
        cov = d.T @ d / m + eps * np.eye(n)
        new = np.empty_like(f)
        for r in range(m):
            o = np.flatnonzero(observed[r])
            new[r] = mu + cov[:, o] @ np.linalg.solve(cov[np.ix_(o, o)], values[r, o] - mu[o])
        f = new
    return mu, cov, f


def hand_round(x, lo, hi):
    x = np.asarray(x, dtype=float)
    return np.clip(np.sign(x) * np.floor(np.abs(x) + 0.5), lo, hi)


def integer_matrix(rng, n_users, n_items, density, lo=1, hi=5):
    mask = rng.random((n_users, n_items)) < density
    first = rng.integers(0, n_items, n_users)
    second = (first + rng.integers(1, n_items, n_users)) % n_items
    mask[np.arange(n_users), first] = True
    mask[np.arange(n_users), second] = True
    u, i = np.nonzero(mask)
    base = rng.integers(lo, hi + 1, size=n_items)
    vals = np.clip(base[i] + rng.integers(-1, 2, size=u.size), lo, hi).astype(float)
    return SparseRatingMatrix(n_users, n_items, u, i, vals, (lo, hi))


class TestPostprocess:
    @pytest.mark.parametrize("x,expected", [(3.4, 3), (5.7, 5), (0.2, 1), (2.5, 3), (3.5, 4),
                                            (-0.5, 1), (4.49, 4)])
    def test_examples(self, x, expected):
        assert postprocess(x, (1, 5)) == expected

    def test_ties_away_from_zero(self):
        assert postprocess(-2.5, (-5, 5)) == -3
        assert postprocess(2.5, (-5, 5)) == 3

    @given(st.floats(-50, 50), st.integers(-3, 3), st.integers(1, 6))
    def test_idempotent_and_in_range(self, x, lo, width):
        hi = lo + width
        once = postprocess(x, (lo, hi))
        assert lo <= once <= hi
        assert postprocess(once, (lo, hi)) == once
        assert postprocess_array([x], (lo, hi))[0] == once


class TestNmae:
    def test_perfect(self):
        r = nmae([1, 2, 3], [1, 2, 3], MOVIELENS_FACTOR)
        assert r.mae == 0.0 and r.nmae == 0.0 and r.n_predictions == 3

    def test_definition(self):
        # |errors| = 0.64 each
        r = nmae([1.64, 3.0], [1.0, 3.64], 1.6)
        assert r.mae == pytest.approx(0.64) and r.nmae == pytest.approx(0.4)

    def test_published_dataset_factors(self):
        assert EACHMOVIE_FACTOR == 1.944 and MOVIELENS_FACTOR == 1.6
        assert default_factor((1, 5)) == 1.6
        assert default_factor((1, 6)) == 1.944

    def test_random_guess_formula(self):
        # E|X - Y| for uniform X, Y on K levels, by enumeration.
        for k in range(2, 11):
            exact = Fraction(sum(abs(a - b) for a in range(k) for b in range(k)), k * k)
            assert random_guess_mae(k) == pytest.approx(float(exact), rel=1e-15)
        assert random_guess_mae(5) == pytest.approx(1.6)
        assert round(random_guess_mae(6), 3) == 1.944

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            nmae([1, 2], [1], 1.6)
        with pytest.raises(EmptyPredictions):
            nmae([], [], 1.6)
        with pytest.raises(ValidationError):
            nmae([1], [1], 0.0)

    @given(st.lists(st.tuples(st.integers(1, 5), st.integers(1, 5)), min_size=1, max_size=40),
           st.sampled_from([1.6, 1.944]))
    def test_exact_relation_and_order_invariance(self, pairs, factor):
        p, t = map(list, zip(*pairs))
        r = nmae(p, t, factor)
        assert r.nmae == r.mae / factor
        rev = nmae(p[::-1], t[::-1], factor)
        assert rev.mae == r.mae

    @settings(max_examples=50)
    @given(st.lists(st.integers(1, 5), min_size=1, max_size=30), st.data())
    def test_corruption_shifts_mae(self, truths, data):
        n = len(truths)
        preds = [t + data.draw(st.integers(0, 2)) for t in truths]
        k = data.draw(st.integers(0, n))
        bumped = [p + 1 if j < k else p for j, p in enumerate(preds)]
        diff = nmae(bumped, truths, 1.6).mae - nmae(preds, truths, 1.6).mae
        assert diff == pytest.approx(k / n, abs=1e-12)

    def test_average(self):
        reps = [nmae([1, 2], [2, 2], 1.6), nmae([1, 1], [3, 1], 1.6), nmae([4], [4], 1.6)]
        avg = average_reports(reps, seeds=(0, 1, 2))
        assert avg.runs == 3 and avg.seeds == (0, 1, 2)
        assert avg.nmae == pytest.approx(np.mean([r.nmae for r in reps]), rel=1e-15)
        assert avg.nmae == avg.mae / 1.6
        with pytest.raises(ValidationError):
            average_reports([reps[0], nmae([1], [1], 1.944)])


class TestWeak:
    def test_constant_ratings(self, rng):
        mask = rng.random((30, 8)) < 0.5
        mask[:, :2] = True
        u, i = np.nonzero(mask)
        m = SparseRatingMatrix(30, 8, u, i, np.full(u.size, 4.0), (1, 5))
        split = split_weak(m, 0)
        r = evaluate_weak(split, factor=1.6)
        assert r.mae == 0.0

    def test_matches_hand_pipeline(self):
        values = np.array([[5.0, 3.0, 4.0], [1.0, 2.0, np.nan], [4.0, np.nan, 5.0]])
        u, i = np.nonzero(~np.isnan(values))
        m = SparseRatingMatrix(3, 3, u, i, values[u, i], (1, 5))
        for seed in range(4):
            split = split_weak(m, seed)
            train = split.train.to_dense()
            _, _, f = hand_em(train)
            held = hand_round(f[split.test.users, split.test.items], 1, 5)
            expected = np.mean(np.abs(held - split.test.ratings))
            r = evaluate_weak(split, factor=1.6)
            assert r.mae == pytest.approx(expected, abs=1e-15)
            assert r.nmae == r.mae / 1.6
            assert r.n_predictions == 3

    def test_hand_pipeline_completion(self):
        d = synth.generate(12, 4, density=0.6, seed=2)
        mu, cov, f = hand_em(d.observed.to_dense())
        res = run_em(d.observed, track=False)
        np.testing.assert_allclose(res.completion, f, atol=1e-9)
        np.testing.assert_allclose(res.model.cov, cov, atol=1e-9)

    def test_three_seed_average(self, rng):
        m = integer_matrix(rng, 60, 10, 0.4)
        reps = [evaluate_weak(split_weak(m, s), factor=1.6) for s in range(3)]
        avg = average_reports(reps, (0, 1, 2))
        assert avg.nmae == pytest.approx(np.mean([r.nmae for r in reps]), rel=1e-12)

    def test_beats_mean_fill_on_synthetic(self):
        d = synth.generate(400, 15, density=0.5, seed=1)
        split = split_weak(d.observed, 0)
        ours = evaluate_weak(split, factor=1.0, rounding=False)
        base = baseline_weak(split, factor=1.0, rounding=False)
        assert ours.mae < base.mae


class TestStrong:
    def make(self, rng):
        return split_strong(integer_matrix(rng, 40, 5, 0.6), 8, 0.5, seed=4)

    def test_hand_computation_with_frozen_model(self, rng):
        split = self.make(rng)
        fit = predict_strong(split)
        mu, cov = fit.model.mean, fit.model.cov
        obs, held = split.test_observed, split.test_heldout
        for k in range(len(held)):
            u, i = held.users[k], held.items[k]
            o = obs.items[obs.users == u]
            y = obs.ratings[obs.users == u]
            order = np.argsort(o)
            o, y = o[order], y[order]
            est = mu + cov[:, o] @ np.linalg.inv(cov[np.ix_(o, o)]) @ (y - mu[o])
            assert fit.predictions[k] == pytest.approx(est[i], abs=1e-10)

    def test_model_fit_only_on_training_users(self, rng):
        split = self.make(rng)
        direct = run_em(split.train_users, track=False).model
        assert predict_strong(split).model.checksum() == direct.checksum()

    def test_order_independent(self, rng):
        split = self.make(rng)
        model = predict_strong(split).model
        held = split.test_heldout
        perm = rng.permutation(len(held))
        a = predict_users(model, split.test_observed, held)
        b = predict_users(model, split.test_observed, held.take(perm))
        np.testing.assert_array_equal(a[perm], b)
        r1 = nmae(postprocess_array(a, (1, 5)), held.ratings, 1.6)
        r2 = nmae(postprocess_array(b, (1, 5)), held.ratings[perm], 1.6)
        assert r1.mae == r2.mae

    def test_prior_mean_for_unobserved_user(self, rng):
        split = self.make(rng)
        model = predict_strong(split).model
        empty = Triplets([], [], [])
        req = Triplets(np.zeros(5, int), np.arange(5), np.zeros(5))
        raw = predict_users(model, empty, req)
        np.testing.assert_array_equal(raw, model.mean)

    def test_does_not_mutate_model(self, rng):
        split = self.make(rng)
        model = predict_strong(split).model
        before = model.checksum()
        predict_users(model, split.test_observed, split.test_heldout, workers=3)
        assert model.checksum() == before

    def test_report(self, rng):
        split = self.make(rng)
        r = evaluate_strong(split)
        assert r.normalization_factor == 1.6
        assert r.n_predictions == len(split.test_heldout)
        assert r.nmae == r.mae / 1.6

    def test_columns_orientation_rejected(self, rng):
        with pytest.raises(ValidationError):
            predict_strong(self.make(rng), EmConfig(orientation="columns"))


def test_mean_fill(rng):
    m = SparseRatingMatrix(3, 3, [0, 1, 2], [0, 0, 1], [1.0, 3.0, 5.0], (1, 5))
    np.testing.assert_allclose(mean_fill(m), [2.0, 5.0, 3.0])
