"""Synthetic dataset generation from the GP model.

Locations are uniform on the unit hypercube, covariates are an intercept
plus standard-normal columns, and responses are drawn either by one dense
Cholesky (small n) or sequentially through the factorized conditionals with
`m_sim` neighbors. The random stream order is: locations, covariates, field
innovations, split assignment.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import NumericalError, ValidationError
from .model import KernelSpec, SpatialDataset, _corr_unchecked, make_dataset
from .neighbors import build_graph
from .vecchia import VecchiaEngine

DENSE_SIM_LIMIT = 4000


def simulate_dataset(n: int, beta, sigma2: float, omega: float, phi: float,
                     kernel_family: str = "exponential", dim: int = 2,
                     test_fraction: float = 0.2, seed: int = 0,
                     m_sim: int = 30, dense_limit: int = DENSE_SIM_LIMIT) -> SpatialDataset:
    """Simulate n observations; exact joint draw up to `dense_limit`, the
    sequential neighbor-conditional draw beyond."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if n < 1:
        raise ValidationError("n must be >= 1")
    if dim < 1:
        raise ValidationError("dim must be >= 1")
    if not (sigma2 > 0 and 0 <= omega <= 1 and phi > 0):
        raise ValidationError("need sigma2 > 0, omega in [0, 1], phi > 0")
    if not (0.0 <= test_fraction < 1.0):
        raise ValidationError("test fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    loc = rng.uniform(0.0, 1.0, size=(n, dim))
    n_cov = beta.size - 1
    cov = rng.standard_normal((n, n_cov)) if n_cov > 0 else None
    xmat_cols = [np.ones((n, 1))] + ([np.asarray(cov)] if cov is not None else [])
    X = np.hstack(xmat_cols)

    if n <= dense_limit:
        y = _dense_draw(loc, X, beta, sigma2, omega, phi, kernel_family, rng)
    else:
        y = _sequential_draw(loc, X, beta, sigma2, omega, phi, kernel_family,
                             min(m_sim, n - 1), rng, seed)

    train_idx = test_idx = None
    if test_fraction > 0.0 and n > 1:
        n_test = int(round(test_fraction * n))
        n_test = min(max(n_test, 1), n - 1)
        order = rng.permutation(n)
        test_idx = np.sort(order[:n_test])
        train_idx = np.sort(order[n_test:])
    return make_dataset(loc, y, cov, intercept=True, train_idx=train_idx, test_idx=test_idx)


def _dense_draw(loc, X, beta, sigma2, omega, phi, family, rng):
    D = cdist(loc, loc)
    R = (1.0 - omega) * _corr_unchecked(family, D, phi)
    np.fill_diagonal(R, 1.0)
    try:
        L = np.linalg.cholesky(sigma2 * R)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("simulation covariance is not positive definite") from exc
    z = rng.standard_normal(loc.shape[0])
    return X @ beta + L @ z


def _sequential_draw(loc, X, beta, sigma2, omega, phi, family, m_sim, rng, seed):
    n = loc.shape[0]
    graph = build_graph(loc, M=m_sim, scheme="maxmin", seed=seed)
    placeholder = SpatialDataset(loc, np.zeros(n), X)
    kernel = KernelSpec(family, 0.5 * phi, 2.0 * phi)
    engine = VecchiaEngine(placeholder, graph, kernel)
    weights, v = engine.conditional_weights(omega, phi)
    z = rng.standard_normal(n)
    xb = engine.X @ beta
    sd = np.sqrt(sigma2 * v)
    y_ord = np.empty(n)
    counts = graph.counts
    nbrs = graph.neighbor_idx
    for k in range(n):
        c = counts[k]
        mu = xb[k]
        if c:
            nb = nbrs[k, :c]
            mu += weights[k, :c] @ (y_ord[nb] - xb[nb])
        y_ord[k] = mu + sd[k] * z[k]
    y = np.empty(n)
    y[graph.perm] = y_ord
    return y
