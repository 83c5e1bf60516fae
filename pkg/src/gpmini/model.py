"""Core domain types: spatial datasets, correlation kernels, GP parameters, priors.

Everything here is immutable after construction and safe to share across
threads; the functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError

KERNEL_FAMILIES = ("exponential", "matern32", "matern52", "gaussian")

# Aliases accepted on input (CLI, config files).
_FAMILY_ALIASES = {
    "exp": "exponential",
    "matern-3/2": "matern32",
    "matern-5/2": "matern52",
    "matern3/2": "matern32",
    "matern5/2": "matern52",
    "sqexp": "gaussian",
}

DUPLICATE_TOL = 1e-12

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


def canonical_family(name: str) -> str:
    key = name.strip().lower()
    key = _FAMILY_ALIASES.get(key, key)
    if key not in KERNEL_FAMILIES:
        raise ValidationError(
            f"unknown kernel family {name!r}; choose from {', '.join(KERNEL_FAMILIES)}"
        )
    return key


def _corr_unchecked(family: str, dist, phi: float):
    """Correlation at distance(s) `dist` for range `phi`, no input validation.

    Hot path for the Vecchia engine; `dist` may be any ndarray.
    """
    t = np.asarray(dist, dtype=float) / phi
    if family == "exponential":
        return np.exp(-t)
    if family == "matern32":
        u = _SQRT3 * t
        return (1.0 + u) * np.exp(-u)
    if family == "matern52":
        u = _SQRT5 * t
        return (1.0 + u + u * u / 3.0) * np.exp(-u)
    if family == "gaussian":
        return np.exp(-t * t)
    raise ValidationError(f"unknown kernel family {family!r}")


@dataclass(frozen=True)
class KernelSpec:
    """Correlation kernel family plus the admissible range-parameter interval."""

    family: str
    phi_min: float
    phi_max: float

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        if not (0.0 < self.phi_min < self.phi_max < np.inf):
            raise ValidationError(
                f"phi bounds must satisfy 0 < phi_min < phi_max < inf, "
                f"got ({self.phi_min}, {self.phi_max})"
            )

    def contains(self, phi: float) -> bool:
        return self.phi_min <= phi <= self.phi_max


def default_phi_bounds(locations: np.ndarray) -> tuple[float, float]:
    """Range bounds tied to the domain scale: (0.001 * D, D) with D the diameter."""
    diam = domain_diameter(locations)
    if diam <= 0.0:
        raise ValidationError("degenerate domain: all locations coincide")
    return 1e-3 * diam, diam


def domain_diameter(locations: np.ndarray) -> float:
    """Largest pairwise Euclidean distance among the locations.

    Exact: reduces to hull vertices first when n is large.
    """
    pts = np.asarray(locations, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, d = pts.shape
    if n == 1:
        return 0.0
    if d == 1:
        return float(pts.max() - pts.min())
    if n > 2000:
        from scipy.spatial import ConvexHull

        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass  # degenerate hull (collinear points): fall through to pairwise
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def correlation(kernel: KernelSpec, dist, phi: float):
    """rho(dist | phi) for the kernel family; equals 1 at distance 0.

    `dist` may be a scalar or array; nonnegative. `phi` must lie inside the
    kernel's bounds.
    """
    d = np.asarray(dist, dtype=float)
    if np.any(d < 0.0):
        raise ValidationError("distances must be nonnegative")
    if not kernel.contains(phi):
        raise ValidationError(
            f"phi={phi} outside bounds [{kernel.phi_min}, {kernel.phi_max}]"
        )
    out = _corr_unchecked(kernel.family, d, phi)
    return float(out) if np.isscalar(dist) else out


@dataclass(frozen=True)
class GpParams:
    """GP parameter state: linear coefficients, sill, nugget proportion, range.

    The covariance entry for locations i, j is sigma2 when i == j and
    sigma2 * (1 - omega) * rho(d_ij | phi) otherwise, so the implied
    correlation matrix omega*I + (1-omega)*M has unit diagonal.
    """

    beta: np.ndarray
    sigma2: float
    omega: float
    phi: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "beta", beta)
        if not np.all(np.isfinite(beta)):
            raise ValidationError("beta must be finite")
        if not (self.sigma2 > 0.0 and np.isfinite(self.sigma2)):
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2}")
        if not (0.0 <= self.omega <= 1.0):
            raise ValidationError(f"omega must lie in [0, 1], got {self.omega}")
        if not np.isfinite(self.phi):
            raise ValidationError("phi must be finite")

    def replace(self, **kw) -> GpParams:
        cur = dict(beta=self.beta, sigma2=self.sigma2, omega=self.omega, phi=self.phi)
        cur.update(kw)
        return GpParams(**cur)


def covariance_entry(i: int, j: int, params: GpParams, kernel: KernelSpec,
                     locations: np.ndarray) -> float:
    """Single covariance matrix entry: sigma2 on the diagonal, nugget-deflated
    correlation off it."""
    locations = np.asarray(locations, dtype=float)
    n = locations.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise ValidationError(f"indices ({i}, {j}) out of range for n={n}")
    if i == j:
        return params.sigma2
    d = float(np.linalg.norm(locations[i] - locations[j]))
    rho = correlation(kernel, d, params.phi)
    return params.sigma2 * (1.0 - params.omega) * rho


def _logit(u: float) -> float:
    return float(np.log(u) - np.log1p(-u))


def _expit(x: float) -> float:
    # symmetric form keeps the round trip exact near the tails
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return float(e / (1.0 + e))


def to_unconstrained(omega: float, phi: float, kernel: KernelSpec) -> tuple[float, float]:
    """Map (omega, phi) to the real line: logit(omega) and the scaled logit of
    phi over its bounds. Both must be strictly interior."""
    if not (0.0 < omega < 1.0):
        raise ValidationError(f"omega={omega} not strictly inside (0, 1)")
    if not (kernel.phi_min < phi < kernel.phi_max):
        raise ValidationError(
            f"phi={phi} not strictly inside ({kernel.phi_min}, {kernel.phi_max})"
        )
    u = (phi - kernel.phi_min) / (kernel.phi_max - kernel.phi_min)
    return _logit(omega), _logit(u)


def from_unconstrained(omega_star: float, phi_star: float,
                       kernel: KernelSpec) -> tuple[float, float]:
    """Inverse of `to_unconstrained`."""
    if not (np.isfinite(omega_star) and np.isfinite(phi_star)):
        raise ValidationError("transformed parameters must be finite")
    omega = _expit(omega_star)
    u = _expit(phi_star)
    return omega, kernel.phi_min + u * (kernel.phi_max - kernel.phi_min)


@dataclass(frozen=True)
class ContinuousThetaPrior:
    """Independent normals on the transformed scale (omega*, phi*)."""

    variance: float = 3.0

    def __post_init__(self):
        if self.variance <= 0:
            raise ValidationError("theta prior variance must be positive")

    def logpdf(self, omega_star: float, phi_star: float) -> float:
        # normalizing constants cancel in acceptance ratios but keep them anyway
        v = self.variance
        return float(
            -0.5 * (omega_star**2 + phi_star**2) / v - np.log(2.0 * np.pi * v)
        )


@dataclass(frozen=True)
class DiscreteThetaPrior:
    """Uniform product prior over strictly increasing grids for omega and phi."""

    omega_grid: np.ndarray
    phi_grid: np.ndarray

    def __post_init__(self):
        og = np.atleast_1d(np.asarray(self.omega_grid, dtype=float))
        pg = np.atleast_1d(np.asarray(self.phi_grid, dtype=float))
        object.__setattr__(self, "omega_grid", og)
        object.__setattr__(self, "phi_grid", pg)
        for name, g in (("omega", og), ("phi", pg)):
            if g.size < 1 or np.any(np.diff(g) <= 0):
                raise ValidationError(f"{name} grid must be nonempty and strictly increasing")
        if og[0] < 0.0 or og[-1] > 1.0:
            raise ValidationError("omega grid must lie inside [0, 1]")

    def validate_bounds(self, kernel: KernelSpec):
        if self.phi_grid[0] < kernel.phi_min or self.phi_grid[-1] > kernel.phi_max:
            raise ValidationError("phi grid must lie inside the kernel bounds")

    @property
    def size(self) -> int:
        return self.omega_grid.size * self.phi_grid.size

    def cells(self) -> list[tuple[float, float]]:
        return [(float(o), float(p)) for o in self.omega_grid for p in self.phi_grid]


def uniform_theta_grid(kernel: KernelSpec, g: int = 20) -> DiscreteThetaPrior:
    """G equally spaced values per parameter, endpoints inset by half a step so
    omega never hits 0 or 1."""
    if g < 1:
        raise ValidationError("grid size must be >= 1")
    step_o = 1.0 / g
    og = (np.arange(g) + 0.5) * step_o
    step_p = (kernel.phi_max - kernel.phi_min) / g
    pg = kernel.phi_min + (np.arange(g) + 0.5) * step_p
    return DiscreteThetaPrior(og, pg)


@dataclass(frozen=True)
class PriorSpec:
    """Priors for the Gibbs sampler: per-coefficient normals for beta,
    inverse gamma (shape, rate) for sigma2, continuous or discrete for theta."""

    beta_mean: np.ndarray
    beta_var: np.ndarray
    sigma2_shape: float
    sigma2_rate: float
    theta: ContinuousThetaPrior | DiscreteThetaPrior

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.beta_mean, dtype=float))
        v = np.atleast_1d(np.asarray(self.beta_var, dtype=float))
        object.__setattr__(self, "beta_mean", m)
        object.__setattr__(self, "beta_var", v)
        if m.shape != v.shape:
            raise ValidationError("beta prior mean and variance shapes differ")
        if np.any(v <= 0.0):
            raise ValidationError("beta prior variances must be positive")
        if self.sigma2_shape <= 0.0 or self.sigma2_rate <= 0.0:
            raise ValidationError("sigma2 prior shape and rate must be positive")

    @property
    def n_coef(self) -> int:
        return self.beta_mean.size


def default_priors(n_coef: int, theta_prior) -> PriorSpec:
    """beta ~ N(0, 1000 I), sigma2 ~ IG(0.01, 0.01)."""
    return PriorSpec(
        beta_mean=np.zeros(n_coef),
        beta_var=np.full(n_coef, 1000.0),
        sigma2_shape=0.01,
        sigma2_rate=0.01,
        theta=theta_prior,
    )


@dataclass(frozen=True)
class SpatialDataset:
    """Observed responses with locations and linear covariates.

    `X` always carries the intercept column explicitly (column 0 all ones
    under the standard convention). `train_idx`/`test_idx`, when present,
    partition {0..n-1}.
    """

    locations: np.ndarray
    y: np.ndarray
    X: np.ndarray
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim == 1:
            loc = loc[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        n = loc.shape[0]
        if n < 1:
            raise ValidationError("dataset must contain at least one observation")
        if not np.all(np.isfinite(loc)):
            raise ValidationError("locations must be finite")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise ValidationError("responses and covariates must be finite")
        if y.shape[0] != n or X.shape[0] != n:
            raise ValidationError(
                f"row mismatch: {n} locations, {y.shape[0]} responses, {X.shape[0]} covariate rows"
            )
        _reject_duplicates(loc)
        if (self.train_idx is None) != (self.test_idx is None):
            raise ValidationError("train and test index sets must be given together")
        if self.train_idx is not None:
            tr = np.asarray(self.train_idx, dtype=int)
            te = np.asarray(self.test_idx, dtype=int)
            object.__setattr__(self, "train_idx", tr)
            object.__setattr__(self, "test_idx", te)
            combined = np.concatenate([tr, te])
            if np.any(combined < 0) or np.any(combined >= n):
                raise ValidationError("split indices out of range")
            if len(np.unique(combined)) != n or combined.size != n:
                raise ValidationError("split must partition the observations")

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    @property
    def n_coef(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def subset(self, idx: np.ndarray) -> SpatialDataset:
        idx = np.asarray(idx, dtype=int)
        return SpatialDataset(self.locations[idx], self.y[idx], self.X[idx])

    def train_view(self) -> SpatialDataset:
        if self.train_idx is None:
            return self
        return self.subset(self.train_idx)

    def test_view(self) -> SpatialDataset:
        if self.test_idx is None:
            raise ValidationError("dataset carries no test split")
        return self.subset(self.test_idx)


def _reject_duplicates(loc: np.ndarray):
    # v_i hits 0 for coincident points when omega = 0, so refuse them up front
    if loc.shape[0] < 2:
        return
    pairs = cKDTree(loc).query_pairs(DUPLICATE_TOL, output_type="ndarray")
    if len(pairs):
        i, j = int(pairs[0][0]), int(pairs[0][1])
        raise ValidationError(
            f"duplicate locations within {DUPLICATE_TOL:g}: rows {i} and {j}"
        )


def make_dataset(locations, y, covariates=None, intercept: bool = True,
                 train_idx=None, test_idx=None) -> SpatialDataset:
    """Assemble a dataset, prepending the all-ones intercept column when asked."""
    loc = np.asarray(locations, dtype=float)
    n = loc.shape[0]
    cols = []
    if intercept:
        cols.append(np.ones((n, 1)))
    if covariates is not None:
        cov = np.asarray(covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        cols.append(cov)
    if not cols:
        raise ValidationError("need an intercept or at least one covariate column")
    X = np.hstack(cols)
    return SpatialDataset(loc, y, X, train_idx=train_idx, test_idx=test_idx)
