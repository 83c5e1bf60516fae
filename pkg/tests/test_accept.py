import numpy as np
import pytest

from gpmini import (KernelSpec, ValidationError, VecchiaEngine, barker_accept_step,
                    batch_gate, build_graph, classical_gate_value, gate_value,
                    make_dataset, mh_accept_step, sample_variance)

from test_vecchia import gp_dataset

KERN = KernelSpec("exponential", 1e-3, 2.0)


def small_engine(n=12, seed=31, m=4):
    ds = gp_dataset(n, seed=seed)
    return VecchiaEngine(ds, build_graph(ds.locations, M=m), KERN)


class TestSampleVariance:
    def test_constant_terms(self):
        assert sample_variance([3.0, 3.0, 3.0]) == 0.0

    def test_two_point(self):
        assert sample_variance([0.0, 2.0]) == pytest.approx(2.0, rel=1e-15)

    def test_two_pass_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            x = rng.normal(size=int(rng.integers(2, 200)))
            mean = sum(x) / len(x)
            oracle = sum((xi - mean) ** 2 for xi in x) / (len(x) - 1)
            assert sample_variance(x) == pytest.approx(oracle, rel=1e-12)

    def test_needs_two(self):
        with pytest.raises(ValidationError):
            sample_variance([1.0])


class TestBatchGate:
    def test_full_batch_never_grows(self):
        assert gate_value(100, 100, 5.0) == 0.0
        assert batch_gate(100, 100, 5.0, c=0.001) is False

    def test_arithmetic_example(self):
        val = gate_value(100, 50, 0.01)
        assert val == pytest.approx((1e4 / 50) * np.sqrt(50 / 99) * 0.01, rel=1e-14)
        assert val == pytest.approx(1.4213, abs=2e-4)
        assert batch_gate(100, 50, 0.01, c=3.0) is False

    def test_zero_variance(self):
        for b in (1, 7, 99):
            assert batch_gate(100, b, 0.0, c=1.0) is False

    def test_strictly_decreasing_in_batch_size(self):
        n = 400
        vals = [gate_value(n, b, 0.3) for b in range(1, n + 1)]
        assert np.all(np.diff(vals) < 0)

    def test_classical_variant_reported(self):
        # paper form carries the square root; the classical value is smaller
        # whenever the correction factor is below one
        assert classical_gate_value(100, 50, 0.01) == pytest.approx(
            (1e4 / 50) * (50 / 99) * 0.01, rel=1e-14)
        assert classical_gate_value(100, 50, 0.01) < gate_value(100, 50, 0.01)

    def test_validation(self):
        with pytest.raises(ValidationError):
            batch_gate(10, 0, 0.1, 1.0)
        with pytest.raises(ValidationError):
            batch_gate(10, 11, 0.1, 1.0)
        with pytest.raises(ValidationError):
            batch_gate(10, 5, -0.1, 1.0)


class TestMhStep:
    def test_zero_log_ratio_full_batch_always_accepts(self):
        eng = small_engine()
        cache = eng.cache(0.5, 0.5)
        beta = np.array([0.1, 0.2, -0.3])
        rng = np.random.default_rng(13)
        batch = np.arange(eng.n)
        for _ in range(500):
            ok, diag = mh_accept_step(eng, cache, cache, beta, 1.0, 0.0, batch, rng)
            assert ok and diag.delta > 0.0

    def test_symmetric_proposal_terms(self):
        # with identical caches and zero prior ratio, delta is exactly the noise
        eng = small_engine()
        cache = eng.cache(0.5, 0.5)
        beta = np.zeros(3)
        rng = np.random.default_rng(14)
        _, diag = mh_accept_step(eng, cache, cache, beta, 1.0, 0.0, np.arange(eng.n), rng)
        u = np.random.default_rng(14).random()
        assert diag.delta == pytest.approx(-np.log1p(-u), rel=1e-12)

    def test_empty_batch_rejected(self):
        eng = small_engine()
        cache = eng.cache(0.5, 0.5)
        with pytest.raises(ValidationError):
            mh_accept_step(eng, cache, cache, np.zeros(3), 1.0, 0.0,
                           np.empty(0, dtype=int), np.random.default_rng(0))

    def test_full_batch_acceptance_probability_is_mh(self):
        # against a fixed proposal the empirical acceptance rate must match
        # min(1, r) with r computed from the exact likelihood ratio
        eng = small_engine(n=20, seed=32, m=19)
        beta = np.array([0.05, 0.4, -0.2])
        sigma2 = 1.1
        cur = eng.cache(0.55, 0.45)
        prop = eng.cache(0.5, 0.5)
        log_r = float(eng.ratio_terms(prop, cur, beta, sigma2).sum())
        target = min(1.0, np.exp(log_r))
        assert 0.05 < target < 0.95, "tune the test: acceptance should be interior"
        rng = np.random.default_rng(15)
        batch = np.arange(20)
        hits = sum(mh_accept_step(eng, prop, cur, beta, sigma2, 0.0, batch, rng)[0]
                   for _ in range(100_000))
        rate = hits / 100_000
        se = np.sqrt(target * (1 - target) / 100_000)
        assert abs(rate - target) <= 4 * se


class TestBarkerStep:
    def test_identical_theta_accepts_half_the_time(self, corr_c1):
        eng = small_engine(n=6, seed=33, m=3)
        cache = eng.cache(0.5, 0.5)
        beta = np.zeros(3)
        rng = np.random.default_rng(16)
        trials = 100_000
        hits = 0
        for _ in range(trials):
            ok, _ = barker_accept_step(eng, cache, cache, beta, 1.0, 0.0,
                                       corr_c1, rng, b_init=6, b_inc=2)
            hits += ok
        se = np.sqrt(0.25 / trials)
        assert abs(hits / trials - 0.5) <= 4 * se

    def test_constant_terms_keep_initial_batch(self, corr_c1):
        eng = small_engine(n=30, seed=34, m=5)
        cache = eng.cache(0.5, 0.5)
        rng = np.random.default_rng(17)
        _, diag = barker_accept_step(eng, cache, cache, np.zeros(3), 1.0, 0.0,
                                     corr_c1, rng, b_init=4, b_inc=5)
        assert diag.batch_size == 4
        assert diag.sigma2_lambda == 0.0

    def test_batch_grows_until_gate_passes(self, corr_c1):
        eng = small_engine(n=300, seed=35, m=6)
        beta = np.array([0.1, 0.5, -0.4])
        cur = eng.cache(0.5, 0.4)
        prop = eng.cache(0.25, 0.8)
        rng = np.random.default_rng(18)
        _, diag = barker_accept_step(eng, prop, cur, beta, 1.0, 0.0,
                                     corr_c1, rng, b_init=10, b_inc=10)
        assert diag.batch_size > 10
        assert diag.gate_value <= corr_c1.c or diag.batch_size == eng.n

    def test_full_batch_matches_exact_barker_probability(self, corr_c1):
        # two-point problem: empirical acceptance vs r/(1+r)
        eng = small_engine(n=20, seed=36, m=19)
        beta = np.array([0.05, 0.4, -0.2])
        sigma2 = 1.1
        cur = eng.cache(0.55, 0.45)
        prop = eng.cache(0.5, 0.5)
        log_r = float(eng.ratio_terms(prop, cur, beta, sigma2).sum())
        target = np.exp(log_r) / (1.0 + np.exp(log_r))
        rng = np.random.default_rng(19)
        trials = 100_000
        hits = 0
        for _ in range(trials):
            ok, diag = barker_accept_step(eng, prop, cur, beta, sigma2, 0.0,
                                          corr_c1, rng, b_init=20, b_inc=5)
            assert diag.batch_size == 20
            hits += ok
        rate = hits / trials
        # TV between the realized rule and exact Barker stays under 0.01
        assert abs(rate - target) <= 0.01

    def test_validation(self, corr_c1):
        eng = small_engine()
        cache = eng.cache(0.5, 0.5)
        with pytest.raises(ValidationError):
            barker_accept_step(eng, cache, cache, np.zeros(3), 1.0, 0.0,
                               corr_c1, np.random.default_rng(0), b_init=1, b_inc=1)
