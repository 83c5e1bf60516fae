"""Proper scoring rules and the prediction metric table.

CRPS for a Gaussian forecast uses the closed form
sigma * (z*(2*Phi(z) - 1) + 2*phi(z) - 1/sqrt(pi)); the ensemble version is
the standard sample estimator mean|x - y| - mean-pairwise|x - x'|/2,
computed in O(S log S) via sorting. The energy score generalizes the
ensemble CRPS to vectors and falls back to explicit pairwise distances, so
large ensembles are thinned (uniform stride) before the quadratic pass.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError
from .predict import PredictiveSummary, thin_rows

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)

ENERGY_MAX_DRAWS = 2000


def crps_gaussian(mu, sigma, y):
    """CRPS of Normal(mu, sigma^2) forecasts at outcomes y (vectorized)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(sigma < 0):
        raise ValidationError("sigma must be nonnegative")
    scalar = mu.ndim == 0 and sigma.ndim == 0 and y.ndim == 0
    mu, sigma, y = np.atleast_1d(mu, sigma, y)
    out = np.empty(np.broadcast(mu, sigma, y).shape)
    degenerate = sigma == 0.0
    z = np.where(degenerate, 0.0, (y - mu) / np.where(degenerate, 1.0, sigma))
    phi = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    out = sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * phi - _INV_SQRT_PI)
    out = np.where(degenerate, np.abs(y - mu), out)
    return float(out[0]) if scalar else out


def crps_ensemble(samples, y: float) -> float:
    """Sample CRPS of a scalar ensemble against one outcome; exact
    O(S log S) evaluation of the pairwise term."""
    x = np.asarray(samples, dtype=float).ravel()
    s = x.size
    if s < 1:
        raise ValidationError("ensemble must be nonempty")
    term1 = np.abs(x - y).mean()
    xs = np.sort(x)
    k = np.arange(1, s + 1)
    pairwise_sum = 2.0 * np.sum((2.0 * k - 1.0 - s) * xs)  # sum_{s,t} |x_s - x_t|
    return float(term1 - pairwise_sum / (2.0 * s * s))


def energy_score(draws, truth, max_draws: int = ENERGY_MAX_DRAWS) -> float:
    """Energy score of a vector ensemble (rows of `draws`) against `truth`;
    thins to `max_draws` rows before the O(S^2) pairwise pass."""
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    t = np.atleast_1d(np.asarray(truth, dtype=float))
    if x.shape[0] < 1:
        raise ValidationError("ensemble must be nonempty")
    if x.shape[1] != t.size:
        raise ValidationError(f"draw dimension {x.shape[1]} != truth dimension {t.size}")
    x = x[thin_rows(x.shape[0], max_draws)]
    s = x.shape[0]
    term1 = np.linalg.norm(x - t[None, :], axis=1).mean()
    pair = 0.0
    chunk = max(1, int(2e7) // max(s, 1))
    for start in range(0, s, chunk):
        block = x[start : start + chunk]
        diff = block[:, None, :] - x[None, :, :]
        pair += np.sqrt((diff**2).sum(-1)).sum()
    return float(term1 - pair / (2.0 * s * s))


def interval_score(lower, upper, y, alpha: float = 0.05):
    """Proper score for central (1-alpha) intervals: width plus scaled
    excursions of the outcome outside the interval."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = np.asarray(y, dtype=float)
    width = upper - lower
    below = np.maximum(lower - y, 0.0)
    above = np.maximum(y - upper, 0.0)
    return width + (2.0 / alpha) * (below + above)


def prediction_metrics(summary: PredictiveSummary, truth) -> dict:
    """MAE, RPMSE, mean Gaussian CRPS, mean 95% interval score, mean width,
    empirical coverage."""
    y = np.asarray(truth, dtype=float).ravel()
    if y.size != summary.mean.size:
        raise ValidationError(
            f"{y.size} truths for {summary.mean.size} predictions"
        )
    err = summary.mean - y
    covered = (y >= summary.lower) & (y <= summary.upper)
    return {
        "MAE": float(np.abs(err).mean()),
        "RPMSE": float(np.sqrt((err**2).mean())),
        "CRPS": float(crps_gaussian(summary.mean, summary.sd, y).mean()),
        "INT": float(interval_score(summary.lower, summary.upper, y).mean()),
        "WID": float((summary.upper - summary.lower).mean()),
        "CVG": float(covered.mean()),
    }


def identifiable_combination(draws: np.ndarray, n_coef: int) -> np.ndarray:
    """Per-draw sigma2 * omega / phi, the combination a single GP realization
    can actually pin down."""
    d = np.asarray(draws, dtype=float)
    if d.ndim != 2 or d.shape[1] != n_coef + 3:
        raise ValidationError("draws must be rows of (beta..., sigma2, omega, phi)")
    sigma2 = d[:, n_coef]
    omega = d[:, n_coef + 1]
    phi = d[:, n_coef + 2]
    return sigma2 * omega / phi
