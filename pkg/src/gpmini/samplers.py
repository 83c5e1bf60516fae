"""Chain orchestration for the four samplers.

    full    Metropolis-within-Gibbs with full conditioning sets (M = n-1);
            exact but O(n^2)-heavy, guarded to small n.
    nn      full-data run under the truncated neighbor likelihood; the
            fixed-batch machinery with a single batch.
    barker  adaptive-batch Barker test per iteration, fresh random batches
            for the conjugate updates.
    fb      fixed batches: the data is split into H batches once; one stored
            iteration is one batch visit, so an (E, H) run stores E*H rows.

Per iteration the schedule is: coefficient sweep, sill draw, then the
(omega, phi) proposal and acceptance test. The proposal is a symmetric
Gaussian walk on the transformed scale under a continuous prior, or an
independent uniform grid draw under a discrete prior. Proposal scales adapt
toward a target acceptance rate during burn-in only, so kept draws come from
a fixed kernel. Given (config, data, seed) a chain is bit-reproducible; the
random stream order per iteration is: conjugate-update batches (barker
only), coefficient draws, sill draw, theta proposal, acceptance randomness.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .accept import barker_accept_step, mh_accept_step
from .correction import CorrectionDistribution, fit_correction_distribution
from .errors import ValidationError
from .gibbs import gibbs_sweep
from .model import (ContinuousThetaPrior, DiscreteThetaPrior, GpParams, KernelSpec,
                    PriorSpec, SpatialDataset, from_unconstrained)
from .neighbors import NeighborGraph, build_graph
from .vecchia import VecchiaEngine

ALGORITHMS = ("full", "nn", "barker", "fb")

PARAM_COLUMNS = ("sigma2", "omega", "phi")


@dataclass
class AlgoConfig:
    """Everything a run needs besides the data, priors and kernel."""

    algorithm: str
    iterations: int | None = None
    epochs: int | None = None
    batches: int | None = None
    m_neighbors: int = 15
    ordering: str = "maxmin"
    prior: str = "continuous"
    cutoff: float = 1.0
    b_init: int | None = None
    b_inc: int | None = None
    b_beta: int | None = None
    b_sigma2: int | None = None
    scale_omega: float = 0.5
    scale_phi: float = 0.5
    seed: int = 0
    burnin: int | None = None
    adapt: bool = True
    adapt_window: int = 50
    adapt_target: float = 0.4
    resplit: bool = False
    theta_grid: int = 20

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        uses_epochs = self.algorithm == "fb"
        if uses_epochs:
            if self.iterations is not None or self.epochs is None or self.batches is None:
                raise ValidationError("fb runs take (epochs, batches), not iterations")
            if self.epochs < 1 or self.batches < 1:
                raise ValidationError("epochs and batches must be >= 1")
        else:
            if self.iterations is None or self.epochs is not None or self.batches is not None:
                raise ValidationError(f"{self.algorithm} runs take iterations, not (epochs, batches)")
            if self.iterations < 1:
                raise ValidationError("iterations must be >= 1")
        if self.prior not in ("continuous", "discrete"):
            raise ValidationError("prior must be continuous or discrete")
        if not (0.0 < self.cutoff <= 3.0):
            raise ValidationError(f"cutoff must lie in (0, 3], got {self.cutoff}")
        if self.m_neighbors < 1:
            raise ValidationError("m_neighbors must be >= 1")
        if self.scale_omega < 0 or self.scale_phi < 0:
            raise ValidationError("proposal scales must be nonnegative")
        if self.adapt_window < 1:
            raise ValidationError("adaptation window must be >= 1")

    @property
    def stored_rows(self) -> int:
        if self.algorithm == "fb":
            return self.epochs * self.batches
        return self.iterations

    def burnin_rows(self) -> int:
        b = self.stored_rows // 2 if self.burnin is None else self.burnin
        if not 0 <= b < self.stored_rows:
            raise ValidationError(f"burn-in {b} outside [0, {self.stored_rows})")
        return b


@dataclass
class ChainOutput:
    """Stored draws plus per-iteration acceptance, batch-size and timing traces."""

    columns: tuple
    draws: np.ndarray
    accepted: np.ndarray
    batch_sizes: np.ndarray
    wall_ms: np.ndarray
    seed: int
    burnin: int
    config: dict = field(default_factory=dict)

    @property
    def rows(self) -> int:
        return self.draws.shape[0]

    def post_burnin(self) -> np.ndarray:
        return self.draws[self.burnin:]

    def column(self, name: str, post_burnin: bool = True) -> np.ndarray:
        j = self.columns.index(name)
        data = self.post_burnin() if post_burnin else self.draws
        return data[:, j]

    def params_matrix(self, post_burnin: bool = True) -> np.ndarray:
        data = self.post_burnin() if post_burnin else self.draws
        return data

    def summary(self) -> dict:
        kept = self.post_burnin()
        stats = {
            name: (float(kept[:, j].mean()), float(kept[:, j].std(ddof=1)))
            for j, name in enumerate(self.columns)
        }
        return {
            "posterior": stats,
            "acceptance_rate": float(self.accepted.mean()),
            "mean_batch_size": float(self.batch_sizes.mean()),
            "total_wall_s": float(self.wall_ms.sum() / 1e3),
        }


@dataclass(frozen=True)
class ThetaState:
    """Current (omega, phi) plus its internal parameterization: transformed
    coordinates under a continuous prior, grid cell under a discrete one."""

    omega: float
    phi: float
    z: np.ndarray | None = None
    cell: tuple | None = None


def split_batches(n: int, h: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random partition of 0..n-1 into h batches whose sizes differ by at
    most one; each batch is returned sorted."""
    if h < 1:
        raise ValidationError("batch count must be >= 1")
    if h > n:
        raise ValidationError(f"cannot split {n} observations into {h} batches")
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, h)]


def propose_theta(state: ThetaState, theta_prior, scales: np.ndarray,
                  rng: np.random.Generator, kernel: KernelSpec) -> tuple[ThetaState, float]:
    """Draw a candidate theta; returns it with the log proposal-density ratio
    (zero for both mechanisms: the walk is symmetric, the grid draw is
    independent uniform)."""
    if isinstance(theta_prior, ContinuousThetaPrior):
        z = state.z + np.asarray(scales) * rng.standard_normal(2)
        omega, phi = from_unconstrained(z[0], z[1], kernel)
        return ThetaState(omega=omega, phi=phi, z=z), 0.0
    io = int(rng.integers(theta_prior.omega_grid.size))
    ip = int(rng.integers(theta_prior.phi_grid.size))
    return ThetaState(omega=float(theta_prior.omega_grid[io]),
                      phi=float(theta_prior.phi_grid[ip]), cell=(io, ip)), 0.0


def log_prior_ratio(prop: ThetaState, cur: ThetaState, theta_prior) -> float:
    if isinstance(theta_prior, ContinuousThetaPrior):
        return theta_prior.logpdf(prop.z[0], prop.z[1]) - theta_prior.logpdf(cur.z[0], cur.z[1])
    return 0.0  # uniform over the grid


def adapt_proposal_scales(rate: float, scales: np.ndarray, t: int,
                          target: float = 0.4) -> np.ndarray:
    """Robbins-Monro step toward the target acceptance rate; diminishing
    1/sqrt(t) moves keep the adaptation stable."""
    if t < 1:
        raise ValidationError("adaptation step index must be >= 1")
    return np.asarray(scales, dtype=float) * np.exp((rate - target) / np.sqrt(t))


def initial_theta(priors: PriorSpec, kernel: KernelSpec) -> ThetaState:
    if isinstance(priors.theta, ContinuousThetaPrior):
        z = np.zeros(2)
        omega, phi = from_unconstrained(0.0, 0.0, kernel)
        return ThetaState(omega=omega, phi=phi, z=z)
    grid = priors.theta
    io = grid.omega_grid.size // 2
    ip = grid.phi_grid.size // 2
    return ThetaState(omega=float(grid.omega_grid[io]), phi=float(grid.phi_grid[ip]),
                      cell=(io, ip))


def run_chain(dataset: SpatialDataset, config: AlgoConfig, priors: PriorSpec,
              kernel: KernelSpec, correction: CorrectionDistribution | None = None,
              graph: NeighborGraph | None = None) -> ChainOutput:
    """Run the configured sampler on the dataset (all rows given; pass a
    train view when the dataset carries a split)."""
    n = dataset.n
    if priors.n_coef != dataset.n_coef:
        raise ValidationError("prior dimension does not match covariate columns")
    _check_prior_kind(config, priors)
    if isinstance(priors.theta, DiscreteThetaPrior):
        priors.theta.validate_bounds(kernel)

    m = n - 1 if config.algorithm == "full" else config.m_neighbors
    if graph is None:
        graph = build_graph(dataset.locations, M=max(1, min(m, n - 1)),
                            scheme=config.ordering, seed=config.seed)
    engine = VecchiaEngine(dataset, graph, kernel)

    rows = config.stored_rows
    burnin = config.burnin_rows()
    rng = np.random.default_rng(config.seed)

    if config.algorithm == "barker":
        if correction is None:
            correction = fit_correction_distribution(config.cutoff)
        elif abs(correction.c - config.cutoff) > 1e-12:
            raise ValidationError(
                f"correction distribution built for c={correction.c}, config wants {config.cutoff}"
            )
        b_init = config.b_init if config.b_init is not None else max(1000, -(-n // 100))
        b_init = max(2, min(b_init, n))
        b_inc = max(1, config.b_inc if config.b_inc is not None else b_init)
        b_beta = min(n, config.b_beta if config.b_beta is not None else b_init)
        b_sigma2 = min(n, config.b_sigma2 if config.b_sigma2 is not None else b_init)

    beta = priors.beta_mean.copy()
    sigma2 = 1.0
    state = initial_theta(priors, kernel)
    cur_cache = engine.cache(state.omega, state.phi)
    scales = np.array([config.scale_omega, config.scale_phi], dtype=float)

    n_cols = beta.size + 3
    columns = tuple(f"beta{p}" for p in range(beta.size)) + PARAM_COLUMNS
    draws = np.empty((rows, n_cols))
    accepted_trace = np.zeros(rows, dtype=bool)
    batch_trace = np.zeros(rows, dtype=np.int64)
    wall_trace = np.zeros(rows)

    if config.algorithm == "fb":
        h_count, epochs = config.batches, config.epochs
    else:
        h_count, epochs = 1, None
    if config.algorithm != "barker":
        batch_sets = split_batches(n, h_count, rng)

    window_accepts = 0
    adapt_steps = 0
    continuous = isinstance(priors.theta, ContinuousThetaPrior)

    for it in range(rows):
        t0 = time.perf_counter()
        if config.algorithm == "barker":
            batch_beta = np.sort(rng.choice(n, size=b_beta, replace=False))
            batch_sigma = np.sort(rng.choice(n, size=b_sigma2, replace=False))
        else:
            if config.resplit and it > 0 and it % h_count == 0:
                batch_sets = split_batches(n, h_count, rng)
            batch = batch_sets[it % h_count]
            batch_beta = batch_sigma = batch

        beta, sigma2 = gibbs_sweep(engine, cur_cache, beta, sigma2,
                                   batch_beta, batch_sigma, priors, rng)

        prop, log_g = propose_theta(state, priors.theta, scales, rng, kernel)
        log_ratio = log_g + log_prior_ratio(prop, state, priors.theta)
        prop_cache = engine.cache(prop.omega, prop.phi)
        if config.algorithm == "barker":
            ok, diag = barker_accept_step(engine, prop_cache, cur_cache, beta, sigma2,
                                          log_ratio, correction, rng, b_init, b_inc)
        else:
            ok, diag = mh_accept_step(engine, prop_cache, cur_cache, beta, sigma2,
                                      log_ratio, batch, rng)
        if ok:
            state = prop
            cur_cache = prop_cache

        if config.adapt and continuous and it < burnin:
            window_accepts += int(ok)
            if (it + 1) % config.adapt_window == 0:
                adapt_steps += 1
                rate = window_accepts / config.adapt_window
                scales = adapt_proposal_scales(rate, scales, adapt_steps,
                                               target=config.adapt_target)
                window_accepts = 0

        draws[it, : beta.size] = beta
        draws[it, beta.size] = sigma2
        draws[it, beta.size + 1] = state.omega
        draws[it, beta.size + 2] = state.phi
        accepted_trace[it] = ok
        batch_trace[it] = diag.batch_size
        wall_trace[it] = (time.perf_counter() - t0) * 1e3

    echo = {
        "algorithm": config.algorithm,
        "n": n,
        "m_neighbors": graph.M,
        "ordering": graph.scheme,
        "kernel": kernel.family,
        "phi_min": kernel.phi_min,
        "phi_max": kernel.phi_max,
        "prior": config.prior,
        "seed": config.seed,
        "rows": rows,
        "burnin": burnin,
        "n_coef": beta.size,
        "dim": dataset.dim,
    }
    if config.algorithm == "fb":
        echo["epochs"] = config.epochs
        echo["batches"] = config.batches
        echo["resplit"] = config.resplit
    else:
        echo["iterations"] = config.iterations
    if config.algorithm == "barker":
        echo["cutoff"] = config.cutoff
        echo["b_init"] = b_init
        echo["b_inc"] = b_inc
        echo["b_beta"] = b_beta
        echo["b_sigma2"] = b_sigma2
        echo["correction_sup_error"] = correction.sup_error
    if continuous:
        echo["scale_omega_final"] = float(scales[0])
        echo["scale_phi_final"] = float(scales[1])
    else:
        echo["theta_grid_omega"] = priors.theta.omega_grid.size
        echo["theta_grid_phi"] = priors.theta.phi_grid.size

    return ChainOutput(columns=columns, draws=draws, accepted=accepted_trace,
                       batch_sizes=batch_trace, wall_ms=wall_trace,
                       seed=config.seed, burnin=burnin, config=echo)


def _check_prior_kind(config: AlgoConfig, priors: PriorSpec):
    is_discrete = isinstance(priors.theta, DiscreteThetaPrior)
    if config.prior == "discrete" and not is_discrete:
        raise ValidationError("config says discrete prior but priors.theta is continuous")
    if config.prior == "continuous" and is_discrete:
        raise ValidationError("config says continuous prior but priors.theta is discrete")


def draws_to_params(draws_row: np.ndarray) -> GpParams:
    """Interpret one stored row as GpParams (beta..., sigma2, omega, phi)."""
    k = draws_row.size - 3
    return GpParams(beta=draws_row[:k], sigma2=float(draws_row[k]),
                    omega=float(draws_row[k + 1]), phi=float(draws_row[k + 2]))
