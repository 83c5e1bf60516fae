"""Discrete correction distribution for the Barker acceptance test.

The acceptance noise L must be standard logistic. Splitting L = L1 + L2 with
L1 ~ Normal(0, c) leaves L2 to follow a distribution h whose convolution
with the Gaussian reproduces the logistic density. h is estimated on a fixed
atom grid by penalized nonnegative least squares over a denser evaluation
grid; when the least-squares fit cannot meet the certification threshold
(unit-mass Gaussian mixtures cannot exceed peak 1/sqrt(2*pi*c), which bites
for c near 3) a linear-program minimax refinement is tried before giving up.

Every constructed distribution carries its measured sup-error and refuses to
exist above CERT_THRESHOLD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import EstimationError, ValidationError

CERT_THRESHOLD = 0.02

# Ladder for the l1 penalty; DEFAULT_PENALTY is the largest rung whose fit at
# c = 1 stays within sup-error 0.01 (see select_penalty, which recomputes it).
PENALTY_LADDER = (100.0, 10.0, 1.0, 0.1, 0.01, 0.001, 1e-4)
DEFAULT_PENALTY = 0.1
C1_TARGET = 0.01

_FISTA_ITERS = 1500


@dataclass(frozen=True)
class CorrectionGrid:
    """Atom grid for h and the denser evaluation grid for the fit."""

    limit: float = 15.0
    atom_step: float = 0.05
    eval_step: float = 0.01

    def __post_init__(self):
        if not (self.limit > 0 and 0 < self.eval_step <= self.atom_step):
            raise ValidationError("grid must satisfy 0 < eval_step <= atom_step, limit > 0")

    def atoms(self) -> np.ndarray:
        m = int(round(self.limit / self.atom_step))
        return np.arange(-m, m + 1) * self.atom_step

    def eval_points(self) -> np.ndarray:
        m = int(round(self.limit / self.eval_step))
        return np.arange(-m, m + 1) * self.eval_step


def logistic_pdf(z):
    a = np.exp(-np.abs(z))
    return a / (1.0 + a) ** 2


class CorrectionDistribution:
    """Probability masses on a grid whose Gaussian convolution approximates
    the standard logistic; sup-error certified at construction."""

    def __init__(self, grid: np.ndarray, mass: np.ndarray, c: float, sup_error: float,
                 grid_spec: CorrectionGrid | None = None):
        grid = np.asarray(grid, dtype=float)
        mass = np.asarray(mass, dtype=float)
        if grid.ndim != 1 or grid.shape != mass.shape:
            raise ValidationError("grid and mass must be 1-d arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid must be strictly increasing")
        if np.any(mass < 0):
            raise ValidationError("masses must be nonnegative")
        total = mass.sum()
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValidationError(f"masses must sum to 1, got {total}")
        if not (0.0 < c <= 3.0):
            raise ValidationError(f"Gaussian variance c must lie in (0, 3], got {c}")
        if sup_error > CERT_THRESHOLD:
            raise EstimationError(
                f"correction distribution sup-error {sup_error:.4g} exceeds "
                f"certification threshold {CERT_THRESHOLD}"
            )
        self.grid = grid
        self.mass = mass
        self.c = float(c)
        self.sup_error = float(sup_error)
        self.grid_spec = grid_spec if grid_spec is not None else CorrectionGrid()
        self._cdf = np.cumsum(mass)
        self._cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.grid[np.searchsorted(self._cdf, rng.random(), side="right")])

    def sample_many(self, size: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(size)
        return self.grid[np.searchsorted(self._cdf, u, side="right")]

    def mean(self) -> float:
        return float(self.grid @ self.mass)

    def convolved_density(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        k = np.exp(-0.5 * (z[:, None] - self.grid[None, :]) ** 2 / self.c)
        return (k / np.sqrt(2.0 * np.pi * self.c)) @ self.mass


def _design(c: float, grid: CorrectionGrid):
    xs = grid.atoms()
    zs = grid.eval_points()
    A = np.exp(-0.5 * (zs[:, None] - xs[None, :]) ** 2 / c) / np.sqrt(2.0 * np.pi * c)
    return xs, zs, A, logistic_pdf(zs)


def _penalized_nnls(A: np.ndarray, b: np.ndarray, lam: float,
                    iters: int = _FISTA_ITERS) -> np.ndarray:
    """min ||Ah - b||^2 + lam * sum(h) over h >= 0, by accelerated projected
    gradient (the sum is an l1 norm on the nonnegative orthant)."""
    ncol = A.shape[1]
    v = np.ones(ncol)
    for _ in range(60):
        v = A.T @ (A @ v)
        v /= np.linalg.norm(v)
    lip = 2.02 * float(v @ (A.T @ (A @ v)))
    step = 1.0 / lip
    Ab = A.T @ b
    h = np.zeros(ncol)
    z = h.copy()
    t = 1.0
    for _ in range(iters):
        g = 2.0 * (A.T @ (A @ z) - Ab) + lam
        h_new = np.maximum(z - step * g, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = h_new + ((t - 1.0) / t_new) * (h_new - h)
        h, t = h_new, t_new
    return h


def _minimax_fit(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """min over unit-mass h >= 0 of the sup-norm fit error, as a linear
    program solved by HiGHS."""
    m, ncol = A.shape
    As = sparse.csr_matrix(A)
    neg_t = sparse.csr_matrix(-np.ones((m, 1)))
    a_ub = sparse.vstack([sparse.hstack([As, neg_t]), sparse.hstack([-As, neg_t])])
    b_ub = np.concatenate([b, -b])
    a_eq = sparse.csr_matrix(np.concatenate([np.ones(ncol), [0.0]])[None, :])
    cost = np.zeros(ncol + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0.0, None)] * (ncol + 1), method="highs")
    if not res.success:
        raise EstimationError(f"minimax correction fit failed: {res.message}")
    return res.x[:ncol]


def fit_correction_distribution(c: float, grid: CorrectionGrid | None = None,
                                penalty: float = DEFAULT_PENALTY) -> CorrectionDistribution:
    """Estimate h for Gaussian variance c and certify its sup-error."""
    if not (0.0 < c <= 3.0):
        raise ValidationError(f"c must lie in (0, 3], got {c}")
    grid = grid if grid is not None else CorrectionGrid()
    xs, _, A, ell = _design(c, grid)

    def normalized_sup(h):
        total = h.sum()
        if total <= 0:
            return None, np.inf
        hn = h / total
        return hn, float(np.max(np.abs(A @ hn - ell)))

    h, sup = normalized_sup(_penalized_nnls(A, ell, penalty))
    if sup > CERT_THRESHOLD:
        h2, sup2 = normalized_sup(_minimax_fit(A, ell))
        if sup2 < sup:
            h, sup = h2, sup2
    if h is None or sup > CERT_THRESHOLD:
        raise EstimationError(
            f"correction fit at c={c} achieved sup-error {sup:.4g} > {CERT_THRESHOLD}"
        )
    return CorrectionDistribution(xs, h, c, sup, grid_spec=grid)


def select_penalty(grid: CorrectionGrid | None = None,
                   ladder: tuple = PENALTY_LADDER, target: float = C1_TARGET) -> float:
    """Largest ladder value whose fit at c = 1 keeps sup-error <= target,
    located by bisection over the (sorted, decreasing-error) ladder."""
    grid = grid if grid is not None else CorrectionGrid()
    rungs = sorted(ladder, reverse=True)
    xs, _, A, ell = _design(1.0, grid)

    def sup_at(lam):
        h = _penalized_nnls(A, ell, lam)
        total = h.sum()
        if total <= 0:
            return np.inf
        return float(np.max(np.abs(A @ (h / total) - ell)))

    lo, hi = 0, len(rungs) - 1  # error decreases with rung index
    if sup_at(rungs[hi]) > target:
        raise EstimationError(f"no ladder value reaches sup-error {target} at c=1")
    if sup_at(rungs[lo]) <= target:
        return rungs[lo]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if sup_at(rungs[mid]) <= target:
            hi = mid
        else:
            lo = mid
    return rungs[hi]


def save_correction(cd: CorrectionDistribution, path):
    """Plain-text serialization; floats carry 17 significant digits so the
    round trip is bit-identical."""
    lines = [
        f"c={cd.c:.17g}",
        f"limit={cd.grid_spec.limit:.17g}",
        f"atom_step={cd.grid_spec.atom_step:.17g}",
        f"eval_step={cd.grid_spec.eval_step:.17g}",
        f"sup_error={cd.sup_error:.17g}",
    ]
    for x, m in zip(cd.grid, cd.mass):
        lines.append(f"{x:.17g} {m:.17g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_correction(path) -> CorrectionDistribution:
    with open(path, "r", encoding="ascii") as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    try:
        head = dict(ln.split("=", 1) for ln in raw[:5])
        c = float(head["c"])
        spec = CorrectionGrid(limit=float(head["limit"]),
                              atom_step=float(head["atom_step"]),
                              eval_step=float(head["eval_step"]))
        sup_error = float(head["sup_error"])
        pairs = np.array([[float(v) for v in ln.split()] for ln in raw[5:]])
    except (KeyError, ValueError, IndexError) as exc:
        raise ValidationError(f"malformed correction distribution file {path}") from exc
    return CorrectionDistribution(pairs[:, 0], pairs[:, 1], c, sup_error, grid_spec=spec)
