"""Posterior predictive inference at held-out locations.

Each posterior draw defines a Gaussian kriging predictor conditioned on the
M nearest training responses (the nugget is included, so the target is the
observable response, not the latent surface). The predictive distribution at
a location is the equal-weight mixture of those Gaussians across draws:
means and SDs come from the mixture moments, the 95% interval from the
mixture CDF, so a single posterior draw reproduces its own kriging SD
exactly. Raw predictive samples (one per draw) are available on request.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.special import ndtr

from ._linalg import batch_backward, batch_forward
from .errors import NumericalError, ValidationError
from .model import KernelSpec, SpatialDataset, _corr_unchecked
from .vecchia import CHOL_JITTER

MAX_PREDICT_DRAWS = 500


@dataclass(frozen=True)
class PredictiveSummary:
    """Per-location predictive mean, SD and central 95% interval."""

    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    raw_draws: np.ndarray | None = None  # (draws, locations) when requested


def thin_rows(rows: int, limit: int) -> np.ndarray:
    """Uniform-stride thinning of row indices down to at most `limit`."""
    if rows <= limit:
        return np.arange(rows)
    stride = -(-rows // limit)
    return np.arange(0, rows, stride)


def predict_at(test: SpatialDataset, train: SpatialDataset, draws: np.ndarray,
               m_neighbors: int, kernel: KernelSpec, max_draws: int = MAX_PREDICT_DRAWS,
               keep_draws: bool = False, seed: int = 0) -> PredictiveSummary:
    """Kriging prediction at the test locations for each posterior draw.

    `draws` rows are (beta..., sigma2, omega, phi); they are thinned by
    uniform stride to at most `max_draws` rows.
    """
    if draws.ndim != 2 or draws.shape[0] < 1:
        raise ValidationError("need a nonempty matrix of posterior draws")
    if m_neighbors < 1:
        raise ValidationError("m_neighbors must be >= 1")
    n_coef = train.n_coef
    if draws.shape[1] != n_coef + 3:
        raise ValidationError(
            f"draw rows have {draws.shape[1]} columns, expected {n_coef + 3}"
        )
    if test.n_coef != n_coef:
        raise ValidationError("test and train covariate columns differ")
    draws = draws[thin_rows(draws.shape[0], max_draws)]
    s_draws = draws.shape[0]

    m = min(m_neighbors, train.n)
    nbr, d0, dn = _test_neighborhoods(test.locations, train.locations, m)
    yn = train.y[nbr]
    xn = train.X[nbr]

    n_test = test.n
    means = np.empty((s_draws, n_test))
    variances = np.empty((s_draws, n_test))
    for s in range(s_draws):
        beta = draws[s, :n_coef]
        sigma2, omega, phi = draws[s, n_coef], draws[s, n_coef + 1], draws[s, n_coef + 2]
        b, v = _kriging_weights(dn, d0, omega, phi, kernel)
        means[s] = test.X @ beta + np.einsum("tm,tm->t", b, yn - xn @ beta)
        variances[s] = sigma2 * v

    mean = means.mean(axis=0)
    total_var = variances.mean(axis=0) + means.var(axis=0)
    sd = np.sqrt(total_var)
    lower, upper = _mixture_interval(means, np.sqrt(variances))

    raw = None
    if keep_draws:
        rng = np.random.default_rng(seed)
        raw = means + np.sqrt(variances) * rng.standard_normal(means.shape)
    return PredictiveSummary(mean=mean, sd=sd, lower=lower, upper=upper, raw_draws=raw)


def _test_neighborhoods(test_loc: np.ndarray, train_loc: np.ndarray, m: int):
    """M nearest training points per test location (ties to smaller index),
    with the distance geometry the kriging weights need."""
    d_all = cdist(test_loc, train_loc)
    nbr = np.empty((test_loc.shape[0], m), dtype=np.int64)
    for t in range(test_loc.shape[0]):
        sel = np.argsort(d_all[t], kind="stable")[:m]
        nbr[t] = np.sort(sel)
    d0 = np.take_along_axis(d_all, nbr, axis=1)
    diff = train_loc[nbr][:, :, None, :] - train_loc[nbr][:, None, :, :]
    dn = np.sqrt((diff**2).sum(-1))
    return nbr, d0, dn


def _kriging_weights(dn: np.ndarray, d0: np.ndarray, omega: float, phi: float,
                     kernel: KernelSpec):
    corr = _corr_unchecked
    R = (1.0 - omega) * corr(kernel.family, dn, phi)
    ii = np.arange(R.shape[1])
    R[:, ii, ii] = 1.0
    r = (1.0 - omega) * corr(kernel.family, d0, phi)
    try:
        L = np.linalg.cholesky(R)
        u = batch_forward(L, r[:, :, None])
        b = batch_backward(L, u)[:, :, 0]
        v = 1.0 - (u[:, :, 0] ** 2).sum(axis=1)
    except np.linalg.LinAlgError:
        b = np.empty_like(r)
        v = np.empty(R.shape[0])
        for t in range(R.shape[0]):
            try:
                cf = cho_factor(R[t], lower=True)
            except np.linalg.LinAlgError:
                try:
                    cf = cho_factor(R[t] + CHOL_JITTER * np.eye(R.shape[1]), lower=True)
                except np.linalg.LinAlgError as exc:
                    raise NumericalError(
                        f"prediction neighborhood {t} has a non-PD correlation matrix"
                    ) from exc
            b[t] = cho_solve(cf, r[t])
            v[t] = 1.0 - float(b[t] @ r[t])
    if np.any(v < -1e-8):
        raise NumericalError("negative kriging variance; degenerate neighborhood")
    return b, np.maximum(v, 0.0)


def _mixture_interval(means: np.ndarray, sds: np.ndarray,
                      level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Central interval of the equal-weight Gaussian mixture, by bisection on
    its CDF (degenerate components contribute step functions)."""
    tail = 0.5 * (1.0 - level)
    spread = np.maximum(sds.max(axis=0), 1e-12)
    lo = (means - 9.0 * sds).min(axis=0) - 1e-9 * spread
    hi = (means + 9.0 * sds).max(axis=0) + 1e-9 * spread

    def mixture_cdf(t):
        z = np.where(sds > 0, (t[None, :] - means) / np.where(sds > 0, sds, 1.0), 0.0)
        vals = np.where(sds > 0, ndtr(z), (t[None, :] >= means).astype(float))
        return vals.mean(axis=0)

    lower = _bisect_quantile(mixture_cdf, tail, lo.copy(), hi.copy())
    upper = _bisect_quantile(mixture_cdf, 1.0 - tail, lo.copy(), hi.copy())
    return lower, upper


def _bisect_quantile(cdf, prob: float, lo: np.ndarray, hi: np.ndarray,
                     iters: int = 80) -> np.ndarray:
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        too_low = cdf(mid) < prob
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
    return 0.5 * (lo + hi)
