import numpy as np
import pytest

from gpmini import (ContinuousThetaPrior, NumericalError, PriorSpec, ValidationError,
                    VecchiaEngine, build_graph, draw_beta_coef, draw_sigma2,
                    gibbs_sweep, make_dataset, minibatch_sum)
from gpmini.model import KernelSpec

from test_vecchia import gp_dataset, unit_correlation

KERN = KernelSpec("exponential", 1e-3, 2.0)


def priors_for(n_coef, beta_var=100.0, a=2.0, b=3.0):
    return PriorSpec(beta_mean=np.zeros(n_coef), beta_var=np.full(n_coef, beta_var),
                     sigma2_shape=a, sigma2_rate=b, theta=ContinuousThetaPrior())


class _FixedNormalRng:
    """Stand-in generator feeding a fixed standard-normal value."""

    def __init__(self, value=0.0):
        self.value = value

    def standard_normal(self):
        return self.value


class TestMinibatchSum:
    def test_full_batch_is_exact(self):
        ds = gp_dataset(40, seed=21)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=5), KERN)
        cache = eng.cache(0.4, 0.3)
        beta = np.array([0.1, 0.5, -0.2])
        for which in (1, 2, 3):
            est = minibatch_sum(which, 1, np.arange(40), eng, cache, beta)
            exact = eng.quadratic_terms(cache, beta, 1)[which - 1].sum()
            assert est.value == pytest.approx(exact, rel=1e-14)
            assert est.batch_size == 40

    def test_constant_terms_any_batch(self):
        # pure nugget with the intercept column: t1 = 1 for every observation
        ds = gp_dataset(30, seed=22)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=4), KERN)
        cache = eng.cache(1.0, 0.5)
        beta = np.zeros(3)
        rng = np.random.default_rng(0)
        for _ in range(5):
            batch = rng.choice(30, size=int(rng.integers(1, 30)), replace=False)
            est = minibatch_sum(1, 0, batch, eng, cache, beta)
            assert est.value == pytest.approx(30.0, rel=1e-12)

    def test_unbiased_over_random_batches(self):
        ds = gp_dataset(200, seed=23)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=6), KERN)
        cache = eng.cache(0.5, 0.4)
        beta = np.array([0.2, 0.9, -0.6])
        exact = eng.quadratic_terms(cache, beta, 2)[1].sum()
        terms = eng.quadratic_terms(cache, beta, 2)[1]
        rng = np.random.default_rng(1)
        reps, b = 10_000, 40
        vals = np.empty(reps)
        for r in range(reps):
            batch = rng.choice(200, size=b, replace=False)
            vals[r] = (200 / b) * terms[batch].sum()
        se = vals.std(ddof=1) / np.sqrt(reps)
        assert abs(vals.mean() - exact) <= 3 * se

    def test_sampling_variance_matches_fpc_formula(self):
        # classical without-replacement variance with the unrooted correction
        ds = gp_dataset(500, seed=24)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=6), KERN)
        cache = eng.cache(0.45, 0.35)
        beta = np.array([0.1, 0.7, -0.4])
        terms = eng.quadratic_terms(cache, beta, 1)[0]
        n, b = 500, 50
        rng = np.random.default_rng(2)
        vals = np.empty(2000)
        for r in range(2000):
            batch = rng.choice(n, size=b, replace=False)
            vals[r] = (n / b) * terms[batch].sum()
        pop_var = terms.var()  # denominator n
        predicted = (n * n / b) * ((n - b) / (n - 1)) * pop_var
        assert vals.var(ddof=1) == pytest.approx(predicted, rel=0.10)

    def test_batch_validation(self):
        ds = gp_dataset(10, seed=25)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=3), KERN)
        cache = eng.cache(0.5, 0.5)
        beta = np.zeros(3)
        with pytest.raises(ValidationError):
            minibatch_sum(1, 0, np.empty(0, dtype=int), eng, cache, beta)
        with pytest.raises(ValidationError):
            minibatch_sum(1, 0, np.array([1, 1]), eng, cache, beta)
        with pytest.raises(ValidationError):
            minibatch_sum(1, 0, np.array([11]), eng, cache, beta)
        with pytest.raises(ValidationError):
            minibatch_sum(4, 0, np.array([1]), eng, cache, beta)


class TestDrawBeta:
    def test_no_information_returns_prior(self):
        prior = priors_for(1, beta_var=4.0)
        prior = PriorSpec(beta_mean=np.array([1.5]), beta_var=np.array([4.0]),
                          sigma2_shape=1.0, sigma2_rate=1.0, theta=ContinuousThetaPrior())
        center = draw_beta_coef(0, 0.0, 0.0, 2.0, prior, _FixedNormalRng(0.0))
        assert center == pytest.approx(1.5, rel=1e-14)
        plus = draw_beta_coef(0, 0.0, 0.0, 2.0, prior, _FixedNormalRng(1.0))
        assert plus - center == pytest.approx(2.0, rel=1e-14)  # sd = sqrt(prior var)

    def test_flat_prior_limit(self):
        prior = PriorSpec(beta_mean=np.array([0.0]), beta_var=np.array([1e12]),
                          sigma2_shape=1.0, sigma2_rate=1.0, theta=ContinuousThetaPrior())
        s1, s2 = 37.0, 18.5
        center = draw_beta_coef(0, s1, s2, 1.0, prior, _FixedNormalRng(0.0))
        assert center == pytest.approx(s2 / s1, rel=1e-9)

    def test_negative_precision_rejected(self):
        prior = priors_for(1)
        with pytest.raises(NumericalError):
            draw_beta_coef(0, -1.0, 0.0, 1.0, prior, _FixedNormalRng())

    def test_full_batch_matches_dense_conjugate_posterior(self):
        ds = gp_dataset(60, seed=26)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=59), KERN)
        omega, phi, sigma2 = 0.4, 0.3, 1.1
        beta = np.array([0.2, 0.6, -0.9])
        prior = priors_for(3, beta_var=50.0)
        cache = eng.cache(omega, phi)
        p = 1
        t1, t2, _ = eng.quadratic_terms(cache, beta, p)
        rng = np.random.default_rng(3)
        draws = np.array([draw_beta_coef(p, t1.sum(), t2.sum(), sigma2, prior, rng)
                          for _ in range(100_000)])
        cov_inv = np.linalg.inv(sigma2 * unit_correlation(ds.locations, omega, phi))
        x_p = ds.X[:, p]
        resid = ds.y - np.delete(ds.X, p, axis=1) @ np.delete(beta, p)
        prec = x_p @ cov_inv @ x_p + 1.0 / 50.0
        mean_d = (x_p @ cov_inv @ resid) / prec
        sd_d = np.sqrt(1.0 / prec)
        assert draws.mean() == pytest.approx(mean_d, abs=3 * sd_d / np.sqrt(draws.size))
        assert draws.std(ddof=1) == pytest.approx(sd_d, rel=0.02)


class TestDrawSigma2:
    def test_shape_parameter_exact(self):
        prior = priors_for(1, a=0.7, b=1.3)
        captured = {}

        class _CapturingRng:
            def gamma(self, shape):
                captured["shape"] = shape
                return 1.0

        n = 33
        value = draw_sigma2(5.0, prior, n, _CapturingRng())
        assert captured["shape"] == n / 2 + 0.7
        assert value == pytest.approx(5.0 / 2 + 1.3, rel=1e-14)  # rate / gamma(=1)

    def test_zero_sum_uses_prior_rate(self):
        prior = priors_for(1, a=3.0, b=2.0)
        rng = np.random.default_rng(4)
        n = 10
        draws = np.array([draw_sigma2(0.0, prior, n, rng) for _ in range(200_000)])
        shape, rate = n / 2 + 3.0, 2.0
        expected_mean = rate / (shape - 1)
        sd = rate / ((shape - 1) * np.sqrt(shape - 2))
        assert draws.mean() == pytest.approx(expected_mean, abs=3 * sd / np.sqrt(draws.size))

    def test_moment_oracle_full_batch(self):
        ds = gp_dataset(50, seed=27)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=7), KERN)
        prior = priors_for(3, a=2.5, b=1.5)
        beta = np.array([0.3, 0.5, -0.2])
        sum3 = eng.scale_terms(eng.cache(0.5, 0.4), beta).sum()
        rng = np.random.default_rng(5)
        draws = np.array([draw_sigma2(sum3, prior, 50, rng) for _ in range(100_000)])
        shape, rate = 50 / 2 + 2.5, sum3 / 2 + 1.5
        mean = rate / (shape - 1)
        sd = rate / ((shape - 1) * np.sqrt(shape - 2))
        assert draws.mean() == pytest.approx(mean, abs=3 * sd / np.sqrt(draws.size))

    def test_negative_sum_rejected(self):
        with pytest.raises(ValidationError):
            draw_sigma2(-0.5, priors_for(1), 10, np.random.default_rng(0))


class TestGibbsInvariance:
    def test_fixed_theta_gibbs_recovers_analytic_beta_posterior(self):
        # long full-batch coordinate Gibbs at fixed (sigma2, omega, phi) vs the
        # analytic multivariate Gaussian posterior of beta
        ds = gp_dataset(40, seed=28)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=39), KERN)
        omega, phi, sigma2 = 0.5, 0.4, 1.0
        prior = priors_for(3, beta_var=25.0)
        cache = eng.cache(omega, phi)
        rng = np.random.default_rng(6)
        beta = np.zeros(3)
        keep = 30_000
        draws = np.empty((keep, 3))
        full = np.arange(40)
        for it in range(keep + 500):
            for p in range(3):
                t1, t2, _ = eng.quadratic_terms(cache, beta, p, full)
                beta[p] = draw_beta_coef(p, t1.sum(), t2.sum(), sigma2, prior, rng)
            if it >= 500:
                draws[it - 500] = beta
        cov_inv = np.linalg.inv(sigma2 * unit_correlation(ds.locations, omega, phi))
        post_prec = ds.X.T @ cov_inv @ ds.X + np.eye(3) / 25.0
        post_cov = np.linalg.inv(post_prec)
        post_mean = post_cov @ (ds.X.T @ cov_inv @ ds.y)
        # batch-means standard error absorbs the Gibbs autocorrelation
        nb = 100
        bm = draws[: keep - keep % nb].reshape(nb, -1, 3).mean(axis=1)
        se = bm.std(axis=0, ddof=1) / np.sqrt(nb)
        assert np.all(np.abs(draws.mean(axis=0) - post_mean) <= 3.5 * se)
        emp_cov = np.cov(draws.T)
        assert np.allclose(np.diag(emp_cov), np.diag(post_cov), rtol=0.10)

    def test_sweep_matches_manual_updates(self):
        ds = gp_dataset(30, seed=29)
        eng = VecchiaEngine(ds, build_graph(ds.locations, M=5), KERN)
        prior = priors_for(3)
        cache = eng.cache(0.4, 0.5)
        batch = np.arange(30)
        b1, s1 = gibbs_sweep(eng, cache, np.zeros(3), 1.0, batch, batch, prior,
                             np.random.default_rng(42))
        b2 = np.zeros(3)
        rng = np.random.default_rng(42)
        for p in range(3):
            t1, t2, _ = eng.quadratic_terms(cache, b2, p, batch)
            b2[p] = draw_beta_coef(p, t1.sum(), t2.sum(), 1.0, prior, rng)
        sum3 = eng.scale_terms(cache, b2, batch).sum()
        s2 = draw_sigma2(sum3, prior, 30, rng)
        assert np.array_equal(b1, b2)
        assert s1 == s2
