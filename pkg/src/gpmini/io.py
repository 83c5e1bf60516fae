"""CSV and sidecar-file formats.

All floats are written with 17 significant digits, so write-then-read is
exact for float64 and equal seeds give byte-identical files. Dataset schema:
s1..sd, y, x1..xP, split (optional, values train/test); the intercept column
is implicit. Chain draws: iter, beta0..betaP, sigma2, omega, phi, accepted,
batch_size, wall_ms, with a key = value metadata sidecar at <path>.meta.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import ValidationError
from .model import SpatialDataset, make_dataset
from .predict import PredictiveSummary
from .samplers import ChainOutput

METRIC_FIELDS = ("MAE", "RPMSE", "CRPS", "INT", "WID", "CVG")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def metadata_path_for(csv_path) -> str:
    return f"{csv_path}.meta"


# -- datasets ----------------------------------------------------------------

def write_dataset_csv(ds: SpatialDataset, path):
    d = ds.dim
    n_cov = ds.n_coef - 1
    header = [f"s{j + 1}" for j in range(d)] + ["y"] + [f"x{j + 1}" for j in range(n_cov)]
    has_split = ds.train_idx is not None
    if has_split:
        header.append("split")
        tag = np.empty(ds.n, dtype=object)
        tag[ds.train_idx] = "train"
        tag[ds.test_idx] = "test"
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ds.n):
            cells = [_fmt(v) for v in ds.locations[i]]
            cells.append(_fmt(ds.y[i]))
            cells.extend(_fmt(v) for v in ds.X[i, 1:])
            if has_split:
                cells.append(tag[i])
            fh.write(",".join(cells) + "\n")


def read_dataset_csv(path) -> SpatialDataset:
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty dataset file") from None
        rows = [row for row in reader if row]
    d = 0
    while d < len(header) and header[d] == f"s{d + 1}":
        d += 1
    if d == 0 or d >= len(header) or header[d] != "y":
        raise ValidationError(f"{path}: header must start with s1..sd, y")
    has_split = header[-1] == "split"
    x_names = header[d + 1 : len(header) - (1 if has_split else 0)]
    if x_names != [f"x{j + 1}" for j in range(len(x_names))]:
        raise ValidationError(f"{path}: covariate columns must be named x1..xP in order")
    n_cov = len(x_names)
    n = len(rows)
    loc = np.empty((n, d))
    y = np.empty(n)
    cov = np.empty((n, n_cov)) if n_cov else None
    split = []
    try:
        for i, row in enumerate(rows):
            if len(row) != len(header):
                raise ValidationError(f"{path}: row {i + 2} has {len(row)} fields")
            loc[i] = [float(v) for v in row[:d]]
            y[i] = float(row[d])
            if n_cov:
                cov[i] = [float(v) for v in row[d + 1 : d + 1 + n_cov]]
            if has_split:
                split.append(row[-1])
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric value in row {i + 2}") from exc
    train_idx = test_idx = None
    if has_split:
        tags = np.asarray(split)
        bad = set(tags) - {"train", "test"}
        if bad:
            raise ValidationError(f"{path}: split values must be train/test, got {sorted(bad)}")
        train_idx = np.where(tags == "train")[0]
        test_idx = np.where(tags == "test")[0]
    return make_dataset(loc, y, cov, intercept=True, train_idx=train_idx, test_idx=test_idx)


# -- chains -------------------------------------------------------------------

def write_chain_csv(out: ChainOutput, path):
    header = ["iter", *out.columns, "accepted", "batch_size", "wall_ms"]
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(out.rows):
            cells = [str(i)]
            cells.extend(_fmt(v) for v in out.draws[i])
            cells.append(str(int(out.accepted[i])))
            cells.append(str(int(out.batch_sizes[i])))
            cells.append(_fmt(out.wall_ms[i]))
            fh.write(",".join(cells) + "\n")


def read_chain_csv(path, metadata: dict | None = None) -> ChainOutput:
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    if header[:1] != ["iter"] or header[-3:] != ["accepted", "batch_size", "wall_ms"]:
        raise ValidationError(f"{path}: not a chain draws file")
    columns = tuple(header[1:-3])
    n = len(rows)
    draws = np.empty((n, len(columns)))
    accepted = np.zeros(n, dtype=bool)
    batch = np.zeros(n, dtype=np.int64)
    wall = np.zeros(n)
    for i, row in enumerate(rows):
        vals = [float(v) for v in row[1:]]
        draws[i] = vals[: len(columns)]
        accepted[i] = bool(int(row[-3]))
        batch[i] = int(row[-2])
        wall[i] = float(row[-1])
    meta = metadata or {}
    burnin = int(meta.get("burnin", 0))
    seed = int(meta.get("seed", -1))
    return ChainOutput(columns=columns, draws=draws, accepted=accepted,
                       batch_sizes=batch, wall_ms=wall, seed=seed,
                       burnin=burnin, config=dict(meta))


def write_metadata(meta: dict, path):
    with open(path, "w", encoding="ascii", newline="") as fh:
        for key, value in meta.items():
            if isinstance(value, float):
                value = _fmt(value)
            fh.write(f"{key} = {value}\n")


def read_metadata(path) -> dict:
    out = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}: malformed metadata line {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


# -- predictions and metrics ---------------------------------------------------

def write_predictions_csv(locations: np.ndarray, truth: np.ndarray,
                          summary: PredictiveSummary, path):
    d = locations.shape[1]
    header = [f"s{j + 1}" for j in range(d)] + ["truth", "mean", "sd", "lo95", "hi95"]
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(locations.shape[0]):
            cells = [_fmt(v) for v in locations[i]]
            cells.extend(_fmt(v) for v in
                         (truth[i], summary.mean[i], summary.sd[i],
                          summary.lower[i], summary.upper[i]))
            fh.write(",".join(cells) + "\n")


def read_predictions_csv(path):
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    tail = ["truth", "mean", "sd", "lo95", "hi95"]
    if header[-5:] != tail:
        raise ValidationError(f"{path}: not a predictions file")
    d = len(header) - 5
    data = np.asarray([[float(v) for v in row] for row in rows])
    return {
        "locations": data[:, :d],
        "truth": data[:, d],
        "mean": data[:, d + 1],
        "sd": data[:, d + 2],
        "lower": data[:, d + 3],
        "upper": data[:, d + 4],
    }


def write_metrics_csv(rows: list[dict], path):
    header = ["label", *METRIC_FIELDS]
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [str(row["label"])]
            cells.extend(_fmt(row[k]) for k in METRIC_FIELDS)
            fh.write(",".join(cells) + "\n")


def read_config_kv(path) -> dict:
    """Flat key=value config file; '#' starts a comment line."""
    out = {}
    with open(path, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{ln}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
