"""Conditional moments, factorized log-likelihood, and the dense oracle.

Writing the joint Gaussian density as a product of univariate conditionals,
observation i contributes Normal(y_i; mu_i, sigma2 * v_i) with

    mu_i = x_i' beta + b_i (Y_N - X_N beta),    v_i = 1 - b_i R(N, i),

where b_i = R(i, N) R(N, N)^-1 over the neighbor set N and R is the
unit-diagonal correlation matrix omega*I + (1-omega)*M. Every likelihood
quantity downstream reduces to three cached arrays that depend on
(omega, phi) only:

    v        conditional variances,
    design   rows x_i' - b_i X_N   (one column per coefficient),
    resp     y_i - b_i Y_N,

so the conditional residual is e = resp - design @ beta. The cache fills
lazily per observation: a minibatch step only pays for the rows it touches,
and a full refresh after an accepted proposal is deferred the same way. The
weights b_i are never materialized in bulk; one forward substitution against
[r, X_N, Y_N] yields v, design and resp directly.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from ._linalg import batch_backward, batch_forward
from .errors import NumericalError, ValidationError
from .model import GpParams, KernelSpec, SpatialDataset, _corr_unchecked
from .neighbors import NeighborGraph

V_FLOOR = 1e-12
CHOL_JITTER = 1e-10

# n * M^2 doubles above this use the per-row path instead of stacked tensors
_STACKED_LIMIT = 5e7

DENSE_GUARD = 20_000
PREFIX_GUARD = 4000


class ConditionalCache:
    """Per-observation conditional quantities for one (omega, phi).

    Arrays are in ordered positions and filled on demand through the owning
    engine; `weights(k)` recomputes the kriging weight vector b_k.
    """

    def __init__(self, engine: "VecchiaEngine", omega: float, phi: float):
        self.engine = engine
        self.omega = float(omega)
        self.phi = float(phi)
        n = engine.n
        self.v = np.empty(n)
        self.design = np.empty((n, engine.n_coef))
        self.resp = np.empty(n)
        self.filled = np.zeros(n, dtype=bool)
        self._L = None  # prefix mode: Cholesky factor kept for weight queries

    @property
    def key(self) -> tuple[float, float]:
        return (self.omega, self.phi)

    def nbytes(self) -> int:
        total = self.v.nbytes + self.design.nbytes + self.resp.nbytes + self.filled.nbytes
        if self._L is not None:
            total += self._L.nbytes
        return total

    def weights(self, k: int) -> np.ndarray:
        return self.engine.weights_for(self, int(k))

    def ensure_all(self):
        self.engine.ensure(self, np.arange(self.engine.n))


class VecchiaEngine:
    """Binds a dataset, neighbor graph and kernel; serves conditional caches.

    All index arguments are ordered positions (the graph's ordering applied
    to the dataset). Caches are memoized by (omega, phi) under a byte budget,
    which makes discrete-prior chains nearly free after warmup.
    """

    def __init__(self, dataset: SpatialDataset, graph: NeighborGraph,
                 kernel: KernelSpec, cache_budget: float = 1e9):
        if graph.n != dataset.n:
            raise ValidationError(f"graph has {graph.n} nodes, dataset has {dataset.n}")
        self.dataset = dataset
        self.graph = graph
        self.kernel = kernel
        self.n = dataset.n
        self.n_coef = dataset.n_coef
        perm = graph.perm
        self.loc = dataset.locations[perm]
        self.y = dataset.y[perm]
        self.X = dataset.X[perm]
        self._budget = float(cache_budget)
        self._memo: dict[tuple[float, float], ConditionalCache] = {}
        n, M = self.n, graph.M
        if M >= n - 1:
            self.mode = "prefix"
            if n > PREFIX_GUARD:
                raise ValidationError(
                    f"full conditioning (M >= n-1) is limited to n <= {PREFIX_GUARD}, got n={n}"
                )
            self._dist = cdist(self.loc, self.loc)
        elif n * M * M <= _STACKED_LIMIT:
            self.mode = "stacked"
            ni = np.where(graph.neighbor_idx >= 0, graph.neighbor_idx, 0)
            self._ni = ni
            self._mask = np.arange(M)[None, :] < graph.counts[:, None]
            nb_loc = self.loc[ni]  # (n, M, d)
            diff = nb_loc[:, :, None, :] - nb_loc[:, None, :, :]
            self._dn = np.sqrt((diff**2).sum(-1))
            self._d0 = np.sqrt(((self.loc[:, None, :] - nb_loc) ** 2).sum(-1))
            self._pad_pairs = ~(self._mask[:, :, None] & self._mask[:, None, :])
            self._rhs = np.concatenate(
                [np.zeros((n, M, 1)), self.X[ni] * self._mask[:, :, None],
                 (self.y[ni] * self._mask)[:, :, None]], axis=2)
        else:
            self.mode = "rowloop"

    # -- cache construction -------------------------------------------------

    def cache(self, omega: float, phi: float) -> ConditionalCache:
        """Memoized cache handle for (omega, phi); contents fill lazily."""
        if not (0.0 <= omega <= 1.0):
            raise ValidationError(f"omega={omega} outside [0, 1]")
        if not self.kernel.contains(phi):
            raise ValidationError(
                f"phi={phi} outside [{self.kernel.phi_min}, {self.kernel.phi_max}]"
            )
        key = (float(omega), float(phi))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        cache = ConditionalCache(self, omega, phi)
        self._memo[key] = cache
        self._evict()
        return cache

    def _evict(self):
        while len(self._memo) > 1:
            total = sum(c.nbytes() for c in self._memo.values())
            if total <= self._budget:
                break
            oldest = next(iter(self._memo))
            del self._memo[oldest]

    def ensure(self, cache: ConditionalCache, idx: np.ndarray | None = None):
        """Fill cache rows for `idx` (all rows when None)."""
        if self.mode == "prefix":
            if not cache.filled.all():
                self._fill_prefix(cache)
            return
        if idx is None:
            idx = np.arange(self.n)
        missing = idx[~cache.filled[idx]]
        if missing.size == 0:
            return
        if self.mode == "stacked":
            self._fill_stacked(cache, missing)
        else:
            self._fill_rowloop(cache, missing)
        cache.filled[missing] = True

    def _corr(self, dist, phi):
        return _corr_unchecked(self.kernel.family, dist, phi)

    def _prefix_chol(self, omega: float, phi: float) -> np.ndarray:
        R = (1.0 - omega) * self._corr(self._dist, phi)
        np.fill_diagonal(R, 1.0)
        return _chol_or_raise(R, "full conditioning matrix")

    def _fill_prefix(self, cache: ConditionalCache):
        L = self._prefix_chol(cache.omega, cache.phi)
        v = np.diag(L) ** 2
        _check_v(v, np.arange(self.n))
        # b_i X_N = L[i, :i] (L[:i, :i])^-1 X_N: one triangular solve then a
        # strictly-lower product, instead of forming the weight matrix
        rhs = np.concatenate([self.X, self.y[:, None]], axis=1)
        W = solve_triangular(L, rhs, lower=True)
        contrib = np.tril(L, -1) @ W
        cache._L = L
        cache.v = v
        cache.design = self.X - contrib[:, :-1]
        cache.resp = self.y - contrib[:, -1]
        cache.filled[:] = True

    def _neighbor_system(self, cache: ConditionalCache, rows: np.ndarray):
        om, ph = cache.omega, cache.phi
        M = self.graph.M
        R = (1.0 - om) * self._corr(self._dn[rows], ph)
        R[self._pad_pairs[rows]] = 0.0
        ii = np.arange(M)
        R[:, ii, ii] = 1.0
        r = (1.0 - om) * self._corr(self._d0[rows], ph)
        r[~self._mask[rows]] = 0.0
        return R, r

    def _fill_stacked(self, cache: ConditionalCache, rows: np.ndarray):
        R, r = self._neighbor_system(cache, rows)
        rhs = self._rhs[rows].copy()
        rhs[:, :, 0] = r
        try:
            L = np.linalg.cholesky(R)
            sol = batch_forward(L, rhs)
        except np.linalg.LinAlgError:
            self._fill_rowloop(cache, rows)
            return
        u = sol[:, :, 0]
        v = 1.0 - (u * u).sum(axis=1)
        _check_v(v, rows)
        cache.v[rows] = v
        cache.design[rows] = self.X[rows] - np.einsum("bm,bmp->bp", u, sol[:, :, 1:-1])
        cache.resp[rows] = self.y[rows] - np.einsum("bm,bm->b", u, sol[:, :, -1])

    def _fill_rowloop(self, cache: ConditionalCache, rows: np.ndarray):
        for k in rows:
            k = int(k)
            cnt = int(self.graph.counts[k])
            if cnt == 0:
                cache.v[k] = 1.0
                cache.design[k] = self.X[k]
                cache.resp[k] = self.y[k]
                continue
            b, v, nb = self._row_weights(cache.omega, cache.phi, k)
            _check_v(np.asarray([v]), np.asarray([k]))
            cache.v[k] = v
            cache.design[k] = self.X[k] - b @ self.X[nb]
            cache.resp[k] = self.y[k] - b @ self.y[nb]

    def _row_weights(self, omega: float, phi: float, k: int):
        cnt = int(self.graph.counts[k])
        nb = self.graph.neighbor_idx[k, :cnt]
        dn = cdist(self.loc[nb], self.loc[nb])
        d0 = np.linalg.norm(self.loc[nb] - self.loc[k], axis=1)
        R = (1.0 - omega) * self._corr(dn, phi)
        np.fill_diagonal(R, 1.0)
        r = (1.0 - omega) * self._corr(d0, phi)
        try:
            cf = cho_factor(R, lower=True)
        except np.linalg.LinAlgError:
            try:
                cf = cho_factor(R + CHOL_JITTER * np.eye(cnt), lower=True)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"neighbor correlation matrix of observation {k} is not positive definite"
                ) from exc
        b = cho_solve(cf, r)
        return b, 1.0 - float(b @ r), nb

    def weights_for(self, cache: ConditionalCache, k: int) -> np.ndarray:
        """Kriging weight vector b_k (length = neighbor count of k)."""
        if not 0 <= k < self.n:
            raise ValidationError(f"observation index {k} out of range")
        if self.graph.counts[k] == 0:
            return np.empty(0)
        if self.mode == "prefix":
            self.ensure(cache)
            L = cache._L
            return solve_triangular(L[:k, :k], L[k, :k], lower=True, trans=1)
        return self._row_weights(cache.omega, cache.phi, k)[0]

    def conditional_weights(self, omega: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
        """Padded weight matrix (n, M) and conditional variances for all
        observations at once; the sequential simulation path needs b itself."""
        if self.mode == "prefix":
            cache = self.cache(omega, phi)
            self.ensure(cache)
            L = cache._L
            b = np.zeros((self.n, self.graph.M))
            for k in range(1, self.n):
                b[k, :k] = solve_triangular(L[:k, :k], L[k, :k], lower=True, trans=1)
            return b, cache.v.copy()
        if self.mode == "stacked":
            rows = np.arange(self.n)
            R, r = self._neighbor_system(self.cache(omega, phi), rows)
            L = np.linalg.cholesky(R)
            u = batch_forward(L, r[:, :, None])
            b = batch_backward(L, u)[:, :, 0]
            v = 1.0 - (u[:, :, 0] ** 2).sum(axis=1)
            _check_v(v, rows)
            return b, v
        b = np.zeros((self.n, self.graph.M))
        v = np.ones(self.n)
        for k in range(self.n):
            cnt = int(self.graph.counts[k])
            if cnt:
                bk, vk, _ = self._row_weights(omega, phi, k)
                b[k, :cnt] = bk
                v[k] = vk
        _check_v(v, np.arange(self.n))
        return b, v

    # -- likelihood quantities ----------------------------------------------

    def conditional_means(self, cache: ConditionalCache, beta: np.ndarray,
                          idx: np.ndarray | None = None) -> np.ndarray:
        """mu_i for the given coefficients (ordered positions `idx`)."""
        idx = self._all(idx)
        self.ensure(cache, idx)
        return self.y[idx] - (cache.resp[idx] - cache.design[idx] @ beta)

    def loglik_terms(self, cache: ConditionalCache, beta: np.ndarray, sigma2: float,
                     idx: np.ndarray | None = None) -> np.ndarray:
        idx = self._all(idx)
        self.ensure(cache, idx)
        e = cache.resp[idx] - cache.design[idx] @ beta
        s2v = sigma2 * cache.v[idx]
        return -0.5 * (np.log(2.0 * np.pi * s2v) + e * e / s2v)

    def loglik(self, cache: ConditionalCache, beta: np.ndarray, sigma2: float) -> float:
        return float(self.loglik_terms(cache, beta, sigma2).sum())

    def ratio_terms(self, prop: ConditionalCache, cur: ConditionalCache,
                    beta: np.ndarray, sigma2: float,
                    idx: np.ndarray | None = None) -> np.ndarray:
        """Per-observation log-likelihood ratio of proposed vs current
        (omega, phi) at fixed beta, sigma2."""
        idx = self._all(idx)
        self.ensure(prop, idx)
        self.ensure(cur, idx)
        ep = prop.resp[idx] - prop.design[idx] @ beta
        ec = cur.resp[idx] - cur.design[idx] @ beta
        vp = prop.v[idx]
        vc = cur.v[idx]
        return 0.5 * (np.log(vc / vp) + (ec * ec / vc - ep * ep / vp) / sigma2)

    def quadratic_terms(self, cache: ConditionalCache, beta: np.ndarray, p: int,
                        idx: np.ndarray | None = None):
        """The three per-observation sums feeding the conjugate updates for
        coefficient p: (squared whitened covariate, its product with the
        coefficient-p residual, squared whitened residual)."""
        if not 0 <= p < self.n_coef:
            raise ValidationError(f"coefficient index {p} out of range")
        idx = self._all(idx)
        self.ensure(cache, idx)
        a = cache.design[idx, p]
        e = cache.resp[idx] - cache.design[idx] @ beta
        v = cache.v[idx]
        t1 = a * a / v
        t2 = a * (e + beta[p] * a) / v
        t3 = e * e / v
        return t1, t2, t3

    def scale_terms(self, cache: ConditionalCache, beta: np.ndarray,
                    idx: np.ndarray | None = None) -> np.ndarray:
        """Squared whitened residuals e^2/v (the sill-update terms)."""
        idx = self._all(idx)
        self.ensure(cache, idx)
        e = cache.resp[idx] - cache.design[idx] @ beta
        return e * e / cache.v[idx]

    def _all(self, idx):
        if idx is None:
            return np.arange(self.n)
        return np.asarray(idx, dtype=np.int64)


def _check_v(v: np.ndarray, rows: np.ndarray):
    bad = np.where(v <= V_FLOOR)[0]
    if bad.size:
        k = int(rows[bad[0]])
        raise NumericalError(
            f"conditional variance of observation {k} is {v[bad[0]]:.3g} <= {V_FLOOR:g}; "
            "near-duplicate locations with a vanishing nugget?"
        )


def _chol_or_raise(R: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        try:
            return np.linalg.cholesky(R + CHOL_JITTER * np.eye(R.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"{what} is not positive definite") from exc


def dense_loglik(dataset: SpatialDataset, params: GpParams, kernel: KernelSpec) -> float:
    """Exact multivariate normal log density via one Cholesky of the full
    covariance. Oracle and small-n reference; guarded at n <= 20000."""
    n = dataset.n
    if n > DENSE_GUARD:
        raise ValidationError(f"dense log-likelihood guarded at n <= {DENSE_GUARD}, got {n}")
    if not kernel.contains(params.phi):
        raise ValidationError(f"phi={params.phi} outside kernel bounds")
    if dataset.n_coef != params.beta.size:
        raise ValidationError("beta length does not match covariate columns")
    D = cdist(dataset.locations, dataset.locations)
    R = (1.0 - params.omega) * _corr_unchecked(kernel.family, D, params.phi)
    np.fill_diagonal(R, 1.0)
    cov = params.sigma2 * R
    try:
        cf = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance matrix is not positive definite") from exc
    resid = dataset.y - dataset.X @ params.beta
    alpha = cho_solve(cf, resid)
    logdet = 2.0 * np.log(np.diag(cf[0])).sum()
    return float(-0.5 * (n * np.log(2.0 * np.pi) + logdet + resid @ alpha))


def vecchia_loglik(dataset: SpatialDataset, graph: NeighborGraph, params: GpParams,
                   kernel: KernelSpec) -> float:
    """One-shot factorized log-likelihood; builds a throwaway engine.

    Prefer a long-lived VecchiaEngine when evaluating repeatedly.
    """
    engine = VecchiaEngine(dataset, graph, kernel)
    cache = engine.cache(params.omega, params.phi)
    return engine.loglik(cache, params.beta, params.sigma2)
