"""Accept-reject machinery for the correlation parameters (omega, phi).

Three rules share the same decision statistic

    delta = n * mean(batch log-likelihood ratios) + log prior/proposal ratio + L,

accepting iff delta > 0. The rule is exact Metropolis-Hastings when
L = -log(U) and the batch is the full dataset; the Barker variant draws L as
approximate standard-logistic noise assembled from the minibatch CLT noise,
a Gaussian top-up L1*, and a draw L2 from the correction distribution. The
Barker batch grows until the paper-form CLT variance

    (n^2/B) * sqrt((n - B)/(n - 1)) * var(ratio terms)

drops to the cutoff c. Diagnostics also carry the classical finite-population
variance (unrooted correction factor) so the two conventions can be compared.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .correction import CorrectionDistribution
from .vecchia import ConditionalCache, VecchiaEngine


@dataclass(frozen=True)
class AcceptanceDiagnostics:
    batch_size: int
    sigma2_lambda: float
    delta: float
    accepted: bool
    wall_time: float
    gate_value: float = 0.0
    classical_gate_value: float = 0.0
    l1_variance_clamped: bool = False


def sample_variance(values) -> float:
    """Unbiased sample variance (denominator B - 1)."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValidationError("sample variance needs at least two terms")
    return float(np.var(values, ddof=1))


def gate_value(n: int, batch_size: int, sigma2_lambda: float) -> float:
    """CLT variance of the scaled batch mean, with the finite population
    correction under the square root."""
    fpc = (n - batch_size) / (n - 1) if n > 1 else 0.0
    return float((n * n / batch_size) * np.sqrt(fpc) * sigma2_lambda)


def classical_gate_value(n: int, batch_size: int, sigma2_lambda: float) -> float:
    """Same quantity with the textbook (unrooted) finite population factor."""
    fpc = (n - batch_size) / (n - 1) if n > 1 else 0.0
    return (n * n / batch_size) * fpc * sigma2_lambda


def batch_gate(n: int, batch_size: int, sigma2_lambda: float, c: float) -> bool:
    """True iff the batch must keep growing."""
    if not 1 <= batch_size <= n:
        raise ValidationError(f"batch size {batch_size} outside [1, {n}]")
    if sigma2_lambda < 0:
        raise ValidationError("variance estimate must be nonnegative")
    return gate_value(n, batch_size, sigma2_lambda) > c


def mh_accept_step(engine: VecchiaEngine, cache_prop: ConditionalCache,
                   cache_cur: ConditionalCache, beta: np.ndarray, sigma2: float,
                   log_prior_proposal_ratio: float, batch: np.ndarray,
                   rng: np.random.Generator) -> tuple[bool, AcceptanceDiagnostics]:
    """Fixed-batch Metropolis-Hastings test; exact MH when the batch is the
    full dataset."""
    t0 = time.perf_counter()
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValidationError("acceptance batch must be nonempty")
    n = engine.n
    lam = engine.ratio_terms(cache_prop, cache_cur, beta, sigma2, batch)
    u = rng.random()
    noise = -np.log1p(-u)  # -log U with U in (0, 1]
    delta = n * float(lam.mean()) + log_prior_proposal_ratio + noise
    s2l = float(np.var(lam, ddof=1)) if lam.size > 1 else 0.0
    diag = AcceptanceDiagnostics(
        batch_size=int(batch.size),
        sigma2_lambda=s2l,
        delta=float(delta),
        accepted=bool(delta > 0.0),
        wall_time=time.perf_counter() - t0,
        gate_value=gate_value(n, batch.size, s2l),
        classical_gate_value=classical_gate_value(n, batch.size, s2l),
    )
    return diag.accepted, diag


def barker_accept_step(engine: VecchiaEngine, cache_prop: ConditionalCache,
                       cache_cur: ConditionalCache, beta: np.ndarray, sigma2: float,
                       log_prior_proposal_ratio: float, correction: CorrectionDistribution,
                       rng: np.random.Generator, b_init: int, b_inc: int,
                       ) -> tuple[bool, AcceptanceDiagnostics]:
    """Adaptive-batch Barker test.

    Samples an initial batch, grows it by b_inc (without replacement, capped
    at n) while the CLT-variance gate exceeds the correction cutoff, then
    decides with logistic noise L1* + L2.
    """
    t0 = time.perf_counter()
    n = engine.n
    if b_init < 2 or b_inc < 1:
        raise ValidationError("need b_init >= 2 and b_inc >= 1")
    c = correction.c
    order = rng.permutation(n)
    size = min(b_init, n)
    batch = np.sort(order[:size])
    lam = engine.ratio_terms(cache_prop, cache_cur, beta, sigma2, batch)
    s2l = sample_variance(lam)
    while size < n and batch_gate(n, size, s2l, c):
        size = min(size + b_inc, n)
        batch = np.sort(order[:size])
        lam = engine.ratio_terms(cache_prop, cache_cur, beta, sigma2, batch)
        s2l = sample_variance(lam)
    gv = gate_value(n, size, s2l)
    l2 = correction.sample(rng)
    var1 = c - gv
    clamped = var1 < 0.0
    if clamped:
        var1 = 0.0
    l1 = np.sqrt(var1) * rng.standard_normal()
    delta = n * float(lam.mean()) + log_prior_proposal_ratio + l1 + l2
    diag = AcceptanceDiagnostics(
        batch_size=int(size),
        sigma2_lambda=float(s2l),
        delta=float(delta),
        accepted=bool(delta > 0.0),
        wall_time=time.perf_counter() - t0,
        gate_value=float(gv),
        classical_gate_value=classical_gate_value(n, size, s2l),
        l1_variance_clamped=clamped,
    )
    return diag.accepted, diag
