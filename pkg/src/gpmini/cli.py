"""Command-line entry points: simulate, fit, predict, score, correction-dist.

Every subcommand honors --seed and an optional flat key=value --config file;
explicit flags win over file values. Exit codes: 0 success, 2 validation,
3 numerical, 4 I/O.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io as gio
from .correction import DEFAULT_PENALTY, fit_correction_distribution, load_correction, save_correction
from .errors import NumericalError, ValidationError
from .model import (ContinuousThetaPrior, KernelSpec, PriorSpec, default_phi_bounds,
                    uniform_theta_grid)
from .predict import MAX_PREDICT_DRAWS, predict_at
from .samplers import ALGORITHMS, AlgoConfig, run_chain
from .scoring import prediction_metrics
from .simulate import DENSE_SIM_LIMIT, simulate_dataset

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    sp.add_argument("--config", default=None,
                    help="flat key=value file supplying defaults; flags win")
    sp.add_argument("--threads", type=int, default=None,
                    help="cap BLAS threads for the inner loops")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="gpmini",
        description="Minibatch MCMC for Gaussian processes via the factorized "
                    "nearest-neighbor likelihood",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    sp = sub.add_parser("simulate", help="simulate a GP dataset to CSV")
    sp.add_argument("--out", required=True, help="output dataset CSV path")
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--beta", default="0,1,-5", help="comma-separated coefficients")
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--omega", type=float, default=0.5)
    sp.add_argument("--phi", type=float, default=0.236)
    sp.add_argument("--kernel", default="exponential")
    sp.add_argument("--test-fraction", type=float, default=0.2)
    sp.add_argument("--m-sim", type=int, default=30,
                    help="neighbor count for the sequential draw above the dense limit")
    sp.add_argument("--dense-limit", type=int, default=DENSE_SIM_LIMIT)
    _add_common(sp)
    subparsers["simulate"] = sp

    sp = sub.add_parser("fit", help="run a sampler on a dataset CSV")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="draws CSV path; metadata at <out>.meta")
    sp.add_argument("--algorithm", choices=ALGORITHMS, default="nn")
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batches", type=int, default=None)
    sp.add_argument("--m", type=int, default=15, help="neighbor count")
    sp.add_argument("--ordering", default="maxmin",
                    choices=("maxmin", "as-given", "coordinate-sum", "random"))
    sp.add_argument("--prior", choices=("continuous", "discrete"), default="continuous")
    sp.add_argument("--grid-size", type=int, default=20,
                    help="discrete prior: grid values per parameter")
    sp.add_argument("--kernel", default="exponential")
    sp.add_argument("--phi-min", type=float, default=None,
                    help="default 0.001 * domain diameter")
    sp.add_argument("--phi-max", type=float, default=None,
                    help="default domain diameter")
    sp.add_argument("--cutoff", type=float, default=1.0, help="Barker cutoff c in (0, 3]")
    sp.add_argument("--b-init", type=int, default=None)
    sp.add_argument("--b-inc", type=int, default=None)
    sp.add_argument("--b-beta", type=int, default=None)
    sp.add_argument("--b-sigma2", type=int, default=None)
    sp.add_argument("--scale-omega", type=float, default=0.5)
    sp.add_argument("--scale-phi", type=float, default=0.5)
    sp.add_argument("--burnin", type=int, default=None,
                    help="rows to discard in summaries (default: half)")
    sp.add_argument("--adapt", action=argparse.BooleanOptionalAction, default=True,
                    help="adapt proposal scales during burn-in")
    sp.add_argument("--resplit", action=argparse.BooleanOptionalAction, default=False,
                    help="fb: re-split batches between epochs")
    sp.add_argument("--beta-prior-var", type=float, default=1000.0)
    sp.add_argument("--sigma2-shape", type=float, default=0.01)
    sp.add_argument("--sigma2-rate", type=float, default=0.01)
    sp.add_argument("--theta-prior-var", type=float, default=3.0)
    sp.add_argument("--correction", default=None,
                    help="precomputed correction-distribution file (barker)")
    _add_common(sp)
    subparsers["fit"] = sp

    sp = sub.add_parser("predict", help="posterior predictions at the test split")
    sp.add_argument("--data", required=True, help="dataset CSV with a train/test split")
    sp.add_argument("--draws", required=True, help="draws CSV from fit")
    sp.add_argument("--out", required=True, help="predictions CSV path")
    sp.add_argument("--m", type=int, default=None,
                    help="neighbor count (default: from metadata)")
    sp.add_argument("--max-draws", type=int, default=MAX_PREDICT_DRAWS)
    sp.add_argument("--burnin", type=int, default=None,
                    help="override the metadata burn-in")
    _add_common(sp)
    subparsers["predict"] = sp

    sp = sub.add_parser("score", help="prediction metrics from a predictions CSV")
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--out", required=True, help="metrics CSV path")
    sp.add_argument("--label", default="run", help="row key (algorithm/config tag)")
    _add_common(sp)
    subparsers["score"] = sp

    sp = sub.add_parser("correction-dist", help="fit and store a correction distribution")
    sp.add_argument("--c", type=float, default=1.0, help="Gaussian variance cutoff in (0, 3]")
    sp.add_argument("--out", required=True)
    sp.add_argument("--penalty", type=float, default=DEFAULT_PENALTY)
    _add_common(sp)
    subparsers["correction-dist"] = sp

    return parser, subparsers


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _apply_config_file(args, argv, parser, subparsers):
    """Re-parse with config-file values as defaults so flags keep priority."""
    sp = subparsers[args.command]
    kv = gio.read_config_kv(args.config)
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, raw in kv.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("help", "config"):
            raise ValidationError(f"unknown config key {key!r} for {args.command}")
        action = actions[dest]
        if isinstance(action, argparse.BooleanOptionalAction) or action.type is None and \
                isinstance(action.default, bool):
            word = raw.strip().lower()
            if word not in _BOOL_WORDS:
                raise ValidationError(f"config key {key!r} wants a boolean, got {raw!r}")
            defaults[dest] = _BOOL_WORDS[word]
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw)
            except ValueError as exc:
                raise ValidationError(f"config key {key!r}: cannot parse {raw!r}") from exc
        else:
            defaults[dest] = raw
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _parse_beta(text: str) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"cannot parse coefficient list {text!r}") from exc


def cmd_simulate(args) -> int:
    ds = simulate_dataset(
        n=args.n, beta=_parse_beta(args.beta), sigma2=args.sigma2, omega=args.omega,
        phi=args.phi, kernel_family=args.kernel, dim=args.dim,
        test_fraction=args.test_fraction, seed=args.seed,
        m_sim=args.m_sim, dense_limit=args.dense_limit,
    )
    gio.write_dataset_csv(ds, args.out)
    n_train = ds.n if ds.train_idx is None else ds.train_idx.size
    print(f"wrote {ds.n} observations ({n_train} train) to {args.out}")
    return EXIT_OK


def _build_kernel(args, locations) -> KernelSpec:
    lo, hi = args.phi_min, args.phi_max
    if lo is None or hi is None:
        dlo, dhi = default_phi_bounds(locations)
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
    return KernelSpec(args.kernel, lo, hi)


def cmd_fit(args) -> int:
    ds = gio.read_dataset_csv(args.data)
    train = ds.train_view()
    kernel = _build_kernel(args, train.locations)
    if args.prior == "discrete":
        theta = uniform_theta_grid(kernel, args.grid_size)
    else:
        theta = ContinuousThetaPrior(variance=args.theta_prior_var)
    priors = PriorSpec(
        beta_mean=np.zeros(train.n_coef),
        beta_var=np.full(train.n_coef, args.beta_prior_var),
        sigma2_shape=args.sigma2_shape,
        sigma2_rate=args.sigma2_rate,
        theta=theta,
    )
    config = AlgoConfig(
        algorithm=args.algorithm, iterations=args.iterations, epochs=args.epochs,
        batches=args.batches, m_neighbors=args.m, ordering=args.ordering,
        prior=args.prior, cutoff=args.cutoff, b_init=args.b_init, b_inc=args.b_inc,
        b_beta=args.b_beta, b_sigma2=args.b_sigma2, scale_omega=args.scale_omega,
        scale_phi=args.scale_phi, seed=args.seed, burnin=args.burnin,
        adapt=args.adapt, resplit=args.resplit, theta_grid=args.grid_size,
    )
    correction = None
    if args.algorithm == "barker" and args.correction is not None:
        correction = load_correction(args.correction)
    out = run_chain(train, config, priors, kernel, correction=correction)
    gio.write_chain_csv(out, args.out)
    meta = dict(out.config)
    meta["data"] = args.data
    meta["n_total"] = ds.n
    summary = out.summary()
    meta["acceptance_rate"] = summary["acceptance_rate"]
    meta["mean_batch_size"] = summary["mean_batch_size"]
    meta["total_wall_s"] = summary["total_wall_s"]
    gio.write_metadata(meta, gio.metadata_path_for(args.out))

    print(f"algorithm={args.algorithm} rows={out.rows} burnin={out.burnin} seed={args.seed}")
    print(f"{'param':>10} {'mean':>14} {'sd':>14}")
    for name, (mean, sd) in summary["posterior"].items():
        print(f"{name:>10} {mean:>14.6g} {sd:>14.6g}")
    print(f"acceptance_rate={summary['acceptance_rate']:.4f} "
          f"mean_batch_size={summary['mean_batch_size']:.1f} "
          f"total_wall_s={summary['total_wall_s']:.2f}")
    print(f"wrote {args.out} and {gio.metadata_path_for(args.out)}")
    return EXIT_OK


def cmd_predict(args) -> int:
    ds = gio.read_dataset_csv(args.data)
    if ds.train_idx is None:
        raise ValidationError("predict needs a dataset with a train/test split column")
    meta = gio.read_metadata(gio.metadata_path_for(args.draws))
    chain = gio.read_chain_csv(args.draws, metadata=meta)
    train = ds.train_view()
    test = ds.test_view()
    for key, actual in (("n", train.n), ("dim", ds.dim), ("n_coef", ds.n_coef)):
        stored = meta.get(key)
        if stored is not None and int(stored) != actual:
            raise ValidationError(
                f"metadata mismatch: draws were fit with {key}={stored}, dataset has {actual}"
            )
    try:
        kernel = KernelSpec(meta["kernel"], float(meta["phi_min"]), float(meta["phi_max"]))
    except KeyError as exc:
        raise ValidationError("draws metadata lacks kernel information") from exc
    m = args.m if args.m is not None else int(meta.get("m_neighbors", 15))
    burnin = args.burnin if args.burnin is not None else chain.burnin
    if not 0 <= burnin < chain.rows:
        raise ValidationError(f"burn-in {burnin} outside [0, {chain.rows})")
    draws = chain.draws[burnin:]
    summary = predict_at(test, train, draws, m, kernel,
                         max_draws=args.max_draws, seed=args.seed)
    gio.write_predictions_csv(test.locations, test.y, summary, args.out)
    print(f"wrote predictions for {test.n} locations to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    pred = gio.read_predictions_csv(args.predictions)
    from .predict import PredictiveSummary

    summary = PredictiveSummary(mean=pred["mean"], sd=pred["sd"],
                                lower=pred["lower"], upper=pred["upper"])
    metrics = prediction_metrics(summary, pred["truth"])
    row = {"label": args.label, **metrics}
    gio.write_metrics_csv([row], args.out)
    print(",".join(["label", *gio.METRIC_FIELDS]))
    print(",".join([args.label] + [f"{metrics[k]:.6g}" for k in gio.METRIC_FIELDS]))
    return EXIT_OK


def cmd_correction_dist(args) -> int:
    cd = fit_correction_distribution(args.c, penalty=args.penalty)
    save_correction(cd, args.out)
    atoms = int(np.sum(cd.mass > 0))
    print(f"c={cd.c:g} sup_error={cd.sup_error:.6g} atoms={atoms} -> {args.out}")
    return EXIT_OK


_DISPATCH = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "score": cmd_score,
    "correction-dist": cmd_correction_dist,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            args = _apply_config_file(args, argv, parser, subparsers)
        handler = _DISPATCH[args.command]
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return handler(args)
        return handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
