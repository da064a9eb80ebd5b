import numpy as np
import pytest

from gaussmc import synth
from gaussmc.data import SparseRatingMatrix
from gaussmc.em import (
    EmConfig,
    e_step,
    em_objective,
    initialize,
    m_step,
    run_em,
    total_log_posterior,
)
from gaussmc.errors import DimensionMismatch, EmptyMatrix, TooFewSignals, ValidationError
from gaussmc.gaussian import GaussianModel, MaskedSignal, NoiseModel, log_posterior
from gaussmc.linalg import cholesky


def dense_matrix(values):
    values = np.asarray(values, dtype=float)
    u, i = np.nonzero(~np.isnan(values))
    return SparseRatingMatrix(values.shape[0], values.shape[1], u, i, values[u, i], (1, 5))


class TestConfig:
    def test_defaults(self):
        c = EmConfig()
        assert (c.epsilon, c.iterations, c.noise.variance, c.init_fill, c.orientation) == (
            0.3, 10, 0.0, 3.0, "rows")

    @pytest.mark.parametrize("kwargs", [
        {"epsilon": 0.0},
        {"epsilon": -1.0},
        {"iterations": 0},
        {"iterations": 2.5},
        {"orientation": "diagonal"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            EmConfig(**kwargs)

    def test_zero_epsilon_allowed_with_noise(self):
        EmConfig(epsilon=0.0, noise=NoiseModel(0.5))


class TestInitialize:
    def test_fill(self):
        m = dense_matrix([[5, np.nan], [np.nan, np.nan]])
        np.testing.assert_array_equal(initialize(m, EmConfig()), [[5, 3], [3, 3]])

    def test_fully_observed(self):
        m = dense_matrix([[1, 2], [3, 4]])
        np.testing.assert_array_equal(initialize(m, EmConfig(init_fill=-7.0)), [[1, 2], [3, 4]])

    def test_all_unknown(self):
        m = SparseRatingMatrix(2, 2, [], [], [], (1, 5))
        with pytest.raises(EmptyMatrix):
            initialize(m)


class TestMStep:
    def test_two_signals(self):
        model = m_step([[1.0, 3.0], [3.0, 1.0]], 0.0)
        np.testing.assert_array_equal(model.mean, [2.0, 2.0])
        np.testing.assert_array_equal(model.cov, [[1.0, -1.0], [-1.0, 1.0]])

    def test_constant_signals(self):
        model = m_step(np.full((7, 4), 2.5), 0.3)
        np.testing.assert_array_equal(model.mean, np.full(4, 2.5))
        np.testing.assert_allclose(model.cov, 0.3 * np.eye(4), atol=0)

    def test_min_eigenvalue(self, rng):
        model = m_step(rng.normal(size=(30, 12)), 0.3)
        assert np.linalg.eigvalsh(model.cov).min() >= 0.3 - 1e-12

    def test_divisor_is_m(self, rng):
        f = rng.normal(size=(50, 5))
        np.testing.assert_allclose(m_step(f, 0.0).cov, np.cov(f.T, bias=True), atol=1e-12)

    def test_single_signal(self):
        model = m_step([[4.0]], 0.3)
        assert model.mean[0] == 4.0 and model.cov[0, 0] == 0.3

    def test_errors(self):
        with pytest.raises(TooFewSignals):
            m_step(np.zeros((0, 3)), 0.3)
        with pytest.raises(DimensionMismatch):
            m_step([1.0, 2.0], 0.3)

    def test_worker_count_does_not_change_bits(self, rng):
        f = rng.normal(3, 1, size=(1300, 9))
        a, b = m_step(f, 0.3, workers=1), m_step(f, 0.3, workers=4)
        assert a.checksum() == b.checksum()


class TestRunEm:
    def test_fully_observed_is_fixed(self, rng):
        values = rng.integers(1, 6, size=(12, 4)).astype(float)
        result = run_em(dense_matrix(values), EmConfig(iterations=3))
        np.testing.assert_allclose(result.completion, values, atol=1e-10)

    def test_single_iteration_unrolls(self):
        d = synth.generate(80, 6, density=0.5, seed=3)
        config = EmConfig(iterations=1)
        result = run_em(d.observed, config)
        model = m_step(initialize(d.observed, config), config.epsilon)
        manual = e_step(model, d.observed.signals(), config.noise)
        assert result.completion.tobytes() == manual.tobytes()
        assert result.model.checksum() == model.checksum()

    def test_recovers_mean(self):
        d = synth.generate(2000, 20, density=0.5, seed=0)
        result = run_em(d.observed, track=False)
        assert np.max(np.abs(result.model.mean - d.model.mean)) < 0.1

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_tracks_sample_mean(self, seed):
        d = synth.generate(2000, 20, density=0.5, seed=seed)
        result = run_em(d.observed, track=False)
        assert np.max(np.abs(result.model.mean - d.truth.mean(axis=0))) < 0.1

    def test_observed_entries_fixed_every_iteration(self):
        d = synth.generate(200, 10, density=0.4, seed=5)
        mask = d.observed.mask()
        for iterations in (1, 2, 5):
            result = run_em(d.observed, EmConfig(iterations=iterations), track=False)
            np.testing.assert_allclose(result.completion[mask], d.truth[mask], rtol=0, atol=1e-8)

    def test_trace_monotone(self):
        d = synth.generate(300, 12, density=0.3, seed=9)
        trace = run_em(d.observed).trace
        assert len(trace) == 10
        lp = np.array([r.log_posterior for r in trace])
        obj = np.array([r.objective for r in trace])
        assert np.all(np.diff(lp) >= -1e-6 * np.abs(lp[:-1]))
        assert np.all(np.diff(obj) >= -1e-9 * np.abs(obj[:-1]))

    def test_deterministic_across_workers(self):
        d = synth.generate(700, 8, density=0.3, seed=11)
        a = run_em(d.observed, workers=1, track=False)
        b = run_em(d.observed, workers=4, track=False)
        assert a.completion.tobytes() == b.completion.tobytes()
        assert [r.checksum for r in a.trace] == [r.checksum for r in b.trace]

    def test_model_symmetric_and_factorable(self):
        d = synth.generate(150, 9, density=0.3, seed=2)
        cov = run_em(d.observed, track=False).model.cov
        assert np.array_equal(cov, cov.T)
        cholesky(cov)

    def test_columns_orientation(self):
        d = synth.generate(15, 40, density=0.6, seed=4)
        config = EmConfig(orientation="columns", iterations=3)
        cols = run_em(d.observed, config, track=False)
        rows = run_em(d.observed.transpose(), EmConfig(iterations=3), track=False)
        assert cols.completion.shape == (15, 40)
        np.testing.assert_array_equal(cols.completion, rows.completion.T)
        assert cols.model.dim == 15

    def test_noisy_path_runs(self):
        d = synth.generate(100, 6, density=0.5, seed=8)
        result = run_em(d.observed, EmConfig(noise=NoiseModel(0.2), iterations=4))
        assert np.all(np.isfinite([r.log_posterior for r in result.trace]))


def test_total_log_posterior_matches_per_signal_sum():
    d = synth.generate(60, 7, density=0.5, seed=6)
    signals = d.observed.signals()
    for noise in (NoiseModel(), NoiseModel(0.4)):
        result = run_em(d.observed, EmConfig(iterations=2, noise=noise), track=False)
        total = total_log_posterior(result.model, signals, noise, result.completion)
        each = sum(log_posterior(result.model, s, noise, f)
                   for s, f in zip(signals, result.completion))
        assert total == pytest.approx(each, rel=1e-10)


def test_objective_penalty_terms():
    model = GaussianModel([0.0, 0.0], [[2.0, 0.0], [0.0, 0.5]])
    f = np.zeros((3, 2))
    signals = [MaskedSignal(2, [], []) for _ in range(3)]
    # log|S| = log 1 = 0, tr(S^-1) = 0.5 + 2 = 2.5
    assert em_objective(model, signals, NoiseModel(), f, 0.3) == pytest.approx(-0.5 * 3 * 0.3 * 2.5)
