"""Minibatch-approximated draws from the conjugate complete conditionals.

A random batch estimates each full-data sum as (n/B) * sum over the batch;
the estimate is unbiased under without-replacement sampling and exact at
B = n. The coefficient draw is Normal with precision sum1/sigma2 + 1/s2_p,
the scale draw is inverse gamma with shape n/2 + a and rate sum3/2 + b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .model import PriorSpec
from .vecchia import ConditionalCache, VecchiaEngine


@dataclass(frozen=True)
class BatchSumEstimate:
    """Scaled batch estimate of one of the three conjugate-update sums."""

    which: int  # 1, 2 or 3
    value: float
    batch_size: int
    batch_indices: np.ndarray

    def __post_init__(self):
        if self.which not in (1, 2, 3):
            raise ValidationError(f"sum designator must be 1, 2 or 3, got {self.which}")
        if self.batch_size < 1:
            raise ValidationError("batch must be nonempty")
        if not np.isfinite(self.value):
            raise NumericalError(f"batch sum estimate is not finite: {self.value}")


def _check_batch(batch: np.ndarray, n: int) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValidationError("batch must be nonempty")
    if batch.min() < 0 or batch.max() >= n:
        raise ValidationError("batch indices out of range")
    if np.unique(batch).size != batch.size:
        raise ValidationError("batch indices must be distinct")
    return batch


def minibatch_sum(which: int, p: int, batch, engine: VecchiaEngine,
                  cache: ConditionalCache, beta: np.ndarray) -> BatchSumEstimate:
    """(n/B) * sum over the batch of the requested per-observation term."""
    if which not in (1, 2, 3):
        raise ValidationError(f"sum designator must be 1, 2 or 3, got {which}")
    batch = _check_batch(batch, engine.n)
    terms = engine.quadratic_terms(cache, beta, p, batch)[which - 1]
    scale = engine.n / batch.size
    return BatchSumEstimate(which=which, value=float(scale * terms.sum()),
                           batch_size=batch.size, batch_indices=batch)


def draw_beta_coef(p: int, sum1: float, sum2: float, sigma2: float,
                   prior: PriorSpec, rng: np.random.Generator) -> float:
    """One draw of coefficient p from its (possibly batch-approximated)
    complete conditional."""
    if sum1 < 0.0:
        raise NumericalError(f"negative precision contribution {sum1} for coefficient {p}")
    var = 1.0 / (sum1 / sigma2 + 1.0 / prior.beta_var[p])
    if not (var > 0.0 and np.isfinite(var)):
        raise NumericalError(f"nonpositive conditional variance for coefficient {p}")
    mean = var * (sum2 / sigma2 + prior.beta_mean[p] / prior.beta_var[p])
    return float(mean + np.sqrt(var) * rng.standard_normal())


def draw_sigma2(sum3: float, prior: PriorSpec, n: int, rng: np.random.Generator) -> float:
    """One inverse-gamma draw of the sill: shape n/2 + a, rate sum3/2 + b."""
    if sum3 < 0.0:
        raise ValidationError(f"squared-residual sum must be nonnegative, got {sum3}")
    shape = 0.5 * n + prior.sigma2_shape
    rate = 0.5 * sum3 + prior.sigma2_rate
    g = rng.gamma(shape)
    if g <= 0.0:
        raise NumericalError("degenerate gamma draw")
    return float(rate / g)


def gibbs_sweep(engine: VecchiaEngine, cache: ConditionalCache, beta: np.ndarray,
                sigma2: float, batch_beta: np.ndarray, batch_sigma: np.ndarray,
                prior: PriorSpec, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """One systematic-scan update of all coefficients then the sill.

    All coefficients share `batch_beta`; the sill uses `batch_sigma`. Each
    coefficient's residual is recomputed with the freshest values of the
    others.
    """
    beta = np.array(beta, dtype=float, copy=True)
    n = engine.n
    for p in range(beta.size):
        t1, t2, _ = engine.quadratic_terms(cache, beta, p, batch_beta)
        scale = n / batch_beta.size
        beta[p] = draw_beta_coef(p, scale * float(t1.sum()), scale * float(t2.sum()),
                                 sigma2, prior, rng)
    t3 = engine.scale_terms(cache, beta, batch_sigma)
    sum3 = n / batch_sigma.size * float(t3.sum())
    sigma2 = draw_sigma2(sum3, prior, n, rng)
    return beta, sigma2
