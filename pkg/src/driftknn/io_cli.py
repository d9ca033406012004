"""CSV dataset exchange, tidy result output, and the command-line surface.

Data files carry a header ``x0..x{d-1}, y`` plus an optional ``origin``
column: ``P``/``Q`` rows form a two-sample dataset, ``P1..Pm`` (with an
optional ``Q``) a multi-source dataset, and no origin column a plain
sample set. Floats are printed with 17 significant digits so a write/read
cycle reproduces every double bit-exactly.

Every command writes a JSON-lines manifest next to its output capturing
the exact argv, seed, package version, and timestamps; the argv alone
reproduces the output file byte for byte. Exit codes: 0 success, 1
runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    HyperParams,
    MultiSourceDataset,
    RandomSource,
    SampleSet,
    TransferDataset,
    pooled_sample_set,
)
from .classifiers import (
    LEPSKI_WIDTHS,
    adaptive_predict,
    combined_budget_k,
    default_knn_k,
    knn_predict,
    lepski_predict,
    minimax_plan,
    multisource_adaptive_predict,
    multisource_plan,
    multisource_weighted_predict,
    weighted_knn_predict,
)
from .simulation import (
    EXPERIMENT_PRESETS,
    classification_accuracy,
    excess_risk_mc,
    fit_method,
    make_drift_model,
    rate_exponent_check,
    run_preset,
    sample_test_points,
    summarize_accuracy,
    METHODS as SIM_METHODS,
)

__all__ = [
    "CsvFormatError",
    "UsageError",
    "CsvSchema",
    "read_labeled_csv",
    "write_labeled_csv",
    "read_points_csv",
    "write_records_csv",
    "write_aggregate_csv",
    "write_manifest",
    "manifest_argv",
    "run_cli",
    "main",
]

_FLOAT_FMT = ".17g"


class CsvFormatError(ValueError):
    """A data file violates the CSV schema; the message cites the line."""


class UsageError(Exception):
    """Bad command-line configuration; maps to exit code 2."""


@dataclass(frozen=True)
class CsvSchema:
    """Shape of a labeled-data CSV: dimension and origin structure.

    origin is "none" (plain sample set), "transfer" (P/Q tags), or
    "multi" (P1..Pm tags); m counts the sources for "multi".
    """

    d: int
    origin: str
    m: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.origin not in ("none", "transfer", "multi"):
            raise ValueError(f"origin must be none/transfer/multi, got {self.origin!r}")
        if self.origin == "multi" and self.m < 1:
            raise ValueError("multi-source schema needs m >= 1")


def _fmt(v: float) -> str:
    return format(float(v), _FLOAT_FMT)


def _feature_header(d: int) -> list[str]:
    return [f"x{i}" for i in range(d)]


def _parse_header(header: list[str], path: str) -> tuple[int, bool]:
    """Validate the header row; returns (d, has_origin)."""
    cols = [c.strip() for c in header]
    has_origin = bool(cols) and cols[-1] == "origin"
    if has_origin:
        cols = cols[:-1]
    if not cols or cols[-1] != "y":
        raise CsvFormatError(f"{path}: line 1: header must end with 'y' (then optional 'origin')")
    feats = cols[:-1]
    if not feats or feats != _feature_header(len(feats)):
        raise CsvFormatError(f"{path}: line 1: feature columns must be x0..x{{d-1}}, got {feats}")
    return len(feats), has_origin


def write_labeled_csv(path, data) -> CsvSchema:
    """Write a SampleSet, TransferDataset, or MultiSourceDataset.

    Two-sample data writes P rows then Q rows; multi-source writes P1..Pm
    then Q. Floats carry 17 significant digits for exact round-trips.
    """
    if isinstance(data, SampleSet):
        schema = CsvSchema(data.d, "none")
        parts = [(None, data)]
    elif isinstance(data, TransferDataset):
        schema = CsvSchema(data.d, "transfer")
        parts = [("P", data.p_data), ("Q", data.q_data)]
    elif isinstance(data, MultiSourceDataset):
        schema = CsvSchema(data.d, "multi", m=data.m)
        parts = [(f"P{i + 1}", s) for i, s in enumerate(data.sources)]
        parts.append(("Q", data.q_data))
    else:
        raise TypeError(f"not a dataset type: {type(data).__name__}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = _feature_header(schema.d) + ["y"]
        if schema.origin != "none":
            header.append("origin")
        w.writerow(header)
        for tag, s in parts:
            for i in range(len(s)):
                row = [_fmt(v) for v in s.points[i]] + [str(int(s.labels[i]))]
                if tag is not None:
                    row.append(tag)
                w.writerow(row)
    return schema


def _rows_to_set(rows: list[np.ndarray], labels: list[int], d: int) -> SampleSet:
    if not rows:
        return SampleSet.empty(d)
    return SampleSet(np.vstack(rows), np.asarray(labels, dtype=np.int64))


def read_labeled_csv(path, schema: CsvSchema | None = None):
    """Read a labeled-data CSV; the origin column decides the return type.

    No origin column gives a SampleSet; {P, Q} tags a TransferDataset;
    contiguous P1..Pm tags (plus optional Q) a MultiSourceDataset. If a
    schema is given the file must match it. Format violations raise
    CsvFormatError citing the 1-based line number.
    """
    path = str(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: line 1: empty file, expected a header row")
        d, has_origin = _parse_header(header, path)
        ncols = d + 1 + (1 if has_origin else 0)
        by_tag: dict[str, tuple[list, list]] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncols:
                raise CsvFormatError(
                    f"{path}: line {lineno}: expected {ncols} fields, got {len(row)}")
            try:
                x = np.array([float(v) for v in row[:d]])
            except ValueError:
                raise CsvFormatError(f"{path}: line {lineno}: non-numeric coordinate")
            if not np.all(np.isfinite(x)):
                raise CsvFormatError(f"{path}: line {lineno}: non-finite coordinate")
            ystr = row[d].strip()
            if ystr not in ("0", "1"):
                raise CsvFormatError(f"{path}: line {lineno}: label must be 0 or 1, got {ystr!r}")
            tag = row[d + 1].strip() if has_origin else ""
            if has_origin:
                ok = tag in ("P", "Q") or (
                    tag.startswith("P") and tag[1:].isdigit() and int(tag[1:]) >= 1)
                if not ok:
                    raise CsvFormatError(f"{path}: line {lineno}: unknown origin tag {tag!r}")
            if tag not in by_tag:
                by_tag[tag] = ([], [])
                order.append(tag)
            by_tag[tag][0].append(x)
            by_tag[tag][1].append(int(ystr))

    if not has_origin:
        data = _rows_to_set(*(by_tag.get("", ([], []))), d=d)
        found = CsvSchema(d, "none")
    else:
        tags = set(order)
        numbered = {t for t in tags if t not in ("P", "Q")}
        if numbered and "P" in tags:
            raise CsvFormatError(f"{path}: cannot mix origin 'P' with numbered sources")
        if numbered:
            ids = sorted(int(t[1:]) for t in numbered)
            if ids != list(range(1, len(ids) + 1)):
                raise CsvFormatError(
                    f"{path}: source tags must be contiguous P1..Pm, got {sorted(numbered)}")
            sources = tuple(
                _rows_to_set(*(by_tag[f"P{i}"]), d=d) for i in range(1, len(ids) + 1))
            q = _rows_to_set(*(by_tag.get("Q", ([], []))), d=d)
            data = MultiSourceDataset(sources, q)
            found = CsvSchema(d, "multi", m=len(ids))
        else:
            p = _rows_to_set(*(by_tag.get("P", ([], []))), d=d)
            q = _rows_to_set(*(by_tag.get("Q", ([], []))), d=d)
            data = TransferDataset(p, q)
            found = CsvSchema(d, "transfer")

    if schema is not None and (schema.d != found.d or schema.origin != found.origin
                               or (schema.origin == "multi" and schema.m != found.m)):
        raise CsvFormatError(f"{path}: schema mismatch: expected {schema}, found {found}")
    return data


def read_points_csv(path) -> np.ndarray:
    """Read query points: header x0..x{d-1} with optional extra columns ignored."""
    path = str(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: line 1: empty file, expected a header row")
        cols = [c.strip() for c in header]
        d = 0
        while d < len(cols) and cols[d] == f"x{d}":
            d += 1
        if d == 0:
            raise CsvFormatError(f"{path}: line 1: expected feature columns x0..x{{d-1}}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < d:
                raise CsvFormatError(f"{path}: line {lineno}: expected >= {d} fields")
            try:
                rows.append([float(v) for v in row[:d]])
            except ValueError:
                raise CsvFormatError(f"{path}: line {lineno}: non-numeric coordinate")
        if not rows:
            raise CsvFormatError(f"{path}: no data rows")
    pts = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise CsvFormatError(f"{path}: non-finite coordinate")
    return pts


_RECORD_COLS = ["experiment", "method", "seed", "replication", "p_max", "gamma",
                "d", "n_p", "n_q", "accuracy", "excess_risk"]
_AGGREGATE_COLS = ["experiment", "method", "seed", "p_max", "gamma", "d", "n_p",
                   "n_q", "reps", "accuracy_mean", "accuracy_se"]


def write_records_csv(path, records) -> None:
    """One row per replication record (wall time excluded: output is rerun-stable)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_RECORD_COLS)
        for r in records:
            w.writerow([
                r.experiment, r.method, r.seed, r.replication, repr(r.p_max),
                repr(r.gamma), r.d, r.n_p, r.n_q,
                "" if r.accuracy is None else repr(r.accuracy),
                "" if r.excess_risk is None else repr(r.excess_risk),
            ])


def write_aggregate_csv(path, rows) -> None:
    """One row per method x grid point with mean accuracy and standard error."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_AGGREGATE_COLS)
        for r in rows:
            w.writerow([
                r.experiment, r.method, r.seed, repr(r.p_max), repr(r.gamma), r.d,
                r.n_p, r.n_q, r.reps, repr(r.accuracy_mean), repr(r.accuracy_se),
            ])


def write_manifest(out_path, argv: list[str], seed: int, started: str, config: dict) -> Path:
    """Write the JSON-lines run manifest next to the output file."""
    manifest = Path(str(out_path) + ".manifest.jsonl")
    entry = {
        "config": dict(config, argv=list(argv)),
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    with open(manifest, "w") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return manifest


def manifest_argv(manifest_path) -> list[str]:
    """Recover the exact argv stored in a run manifest."""
    with open(manifest_path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{manifest_path}: empty manifest")
    return list(json.loads(lines[-1])["config"]["argv"])


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}")


def _parse_ints(text: str) -> list[int]:
    out = []
    for v in text.split(","):
        v = v.strip()
        if not v:
            continue
        if not v.lstrip("-").isdigit():
            raise UsageError(f"expected a comma-separated list of integers, got {text!r}")
        out.append(int(v))
    return out


def _hyperparams(args, gamma) -> HyperParams:
    try:
        return HyperParams(alpha=args.alpha, beta=args.beta, gamma=gamma, d=args.d)
    except ValueError as e:
        raise UsageError(str(e))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftknn",
        description="Transfer k-NN classification under posterior drift: "
                    "canned experiments, rate checks, prediction, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a canned accuracy experiment")
    sim.add_argument("experiment", choices=sorted(EXPERIMENT_PRESETS))
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--reps", type=int, default=None, help="replications per grid point")
    sim.add_argument("--np", dest="n_p", default=None, help="source size(s), comma list")
    sim.add_argument("--nq", dest="n_q", type=int, default=None, help="target size")
    sim.add_argument("--pmax", default=None, help="signal level(s), comma list")
    sim.add_argument("--gamma", type=float, default=0.3)
    sim.add_argument("--beta", type=float, default=1.0)
    sim.add_argument("--alpha", type=float, default=0.0)
    sim.add_argument("--d", type=int, default=2)
    sim.add_argument("--lepski-width", choices=sorted(LEPSKI_WIDTHS), default="algorithm3")
    sim.add_argument("--accuracy-target", choices=["bayes", "noisy"], default="bayes")

    rate = sub.add_parser("rate-check", help="fit the excess-risk convergence slope")
    rate.add_argument("--out", default=None, help="optional per-replication CSV path")
    rate.add_argument("--seed", type=int, default=0)
    rate.add_argument("--sizes", default="500,1000,2000,4000,8000,16000")
    rate.add_argument("--reps", type=int, default=24)
    rate.add_argument("--nmc", type=int, default=100_000)
    rate.add_argument("--sweep", choices=["q", "p"], default="q")
    rate.add_argument("--pmax", type=float, default=0.60,
                      help="model signal level (0.60 keeps the slope identifiable)")
    rate.add_argument("--gamma", type=float, default=0.3)
    rate.add_argument("--beta", type=float, default=1.0)
    rate.add_argument("--alpha", type=float, default=0.0)
    rate.add_argument("--d", type=int, default=2)

    pred = sub.add_parser("predict", help="label query points from a training CSV")
    pred.add_argument("--method", required=True,
                      choices=["knn", "weighted", "adaptive", "multisource", "lepski", "combined"])
    pred.add_argument("--train", required=True)
    pred.add_argument("--test", required=True)
    pred.add_argument("--out", required=True)
    pred.add_argument("--gamma", default=None, help="relative signal exponent(s), comma list")
    pred.add_argument("--beta", type=float, default=1.0)
    pred.add_argument("--alpha", type=float, default=0.0)
    pred.add_argument("--d", type=int, default=None, help="expected dimension (validated)")
    pred.add_argument("--k", type=int, default=None, help="neighbor count for knn/combined")
    pred.add_argument("--lepski-width", choices=sorted(LEPSKI_WIDTHS), default="algorithm3")
    pred.add_argument("--pool", action="store_true",
                      help="run knn/lepski on the pooled sample instead of the target rows")

    ev = sub.add_parser("eval", help="score a method against an analytic model")
    ev.add_argument("--method", required=True, choices=sorted(SIM_METHODS))
    ev.add_argument("--train", required=True)
    ev.add_argument("--pmax", type=float, default=None,
                    help="analytic model signal level (required)")
    ev.add_argument("--gamma-sim", type=float, default=None,
                    help="model drift exponent (defaults to --gamma)")
    ev.add_argument("--gamma", type=float, default=0.3)
    ev.add_argument("--beta", type=float, default=1.0)
    ev.add_argument("--alpha", type=float, default=0.0)
    ev.add_argument("--n-test", type=int, default=1000)
    ev.add_argument("--radius", type=float, default=0.05)
    ev.add_argument("--nmc", type=int, default=100_000)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", default=None)
    ev.add_argument("--lepski-width", choices=sorted(LEPSKI_WIDTHS), default="algorithm3")
    return parser


def _cmd_simulate(args, argv) -> int:
    started = _now()
    preset = EXPERIMENT_PRESETS[args.experiment]
    overrides: dict = {}
    if args.reps is not None:
        if args.reps < 1:
            raise UsageError("--reps must be >= 1")
        overrides["reps"] = args.reps
    if args.n_p is not None:
        vals = _parse_ints(args.n_p)
        if not vals or any(v < 0 for v in vals):
            raise UsageError("--np must list nonnegative integers")
        overrides["n_p_values"] = tuple(vals)
    if args.n_q is not None:
        if args.n_q < 0:
            raise UsageError("--nq must be >= 0")
        overrides["n_q"] = args.n_q
    if args.pmax is not None:
        vals = _parse_floats(args.pmax)
        if not vals or any(not (0.5 < v <= 1.0) for v in vals):
            raise UsageError("--pmax values must lie in (0.5, 1]")
        overrides["p_max_values"] = tuple(vals)
    _hyperparams(args, args.gamma)  # validate ranges up front
    overrides.update(gamma=args.gamma, beta=args.beta, alpha=args.alpha, d=args.d,
                     lepski_width=args.lepski_width, accuracy_target=args.accuracy_target)
    records = run_preset(args.experiment, seed=args.seed, **overrides)
    rows = summarize_accuracy(records)
    write_aggregate_csv(args.out, rows)
    config = dict(command="simulate", experiment=args.experiment, seed=args.seed,
                  out=str(args.out), **{k: (list(v) if isinstance(v, tuple) else v)
                                         for k, v in overrides.items()})
    config.setdefault("reps", preset["reps"])
    write_manifest(args.out, argv, args.seed, started, config)
    for r in rows:
        print(f"{r.experiment} {r.method:16s} p_max={r.p_max:<6g} n_p={r.n_p:<6d} "
              f"accuracy={r.accuracy_mean:.4f} (se {r.accuracy_se:.4f}, reps {r.reps})")
    print(f"wrote {args.out}")
    return 0


def _cmd_rate_check(args, argv) -> int:
    started = _now()
    sizes = _parse_ints(args.sizes)
    hp = _hyperparams(args, args.gamma)
    if not (0.5 < args.pmax <= 1.0):
        raise UsageError("--pmax must lie in (0.5, 1]")
    if args.reps < 2:
        raise UsageError("--reps must be >= 2")
    if args.nmc < 2:
        raise UsageError("--nmc must be >= 2")
    try:
        result = rate_exponent_check(hp, sizes, args.reps, RandomSource(args.seed),
                                     sweep=args.sweep, p_max=args.pmax, n_mc=args.nmc)
    except ValueError as e:
        raise UsageError(str(e))
    for n, risk in zip(result.sizes, result.mean_risks):
        print(f"n={n:<7d} mean excess risk = {risk:.6e}")
    print(f"fitted slope     = {result.slope:+.4f}")
    print(f"bootstrap 95% CI = [{result.ci_low:+.4f}, {result.ci_high:+.4f}]")
    print(f"target slope     = {result.target_slope:+.4f}  (sweep {result.sweep}, "
          f"beta={hp.beta:g}, alpha={hp.alpha:g}, gamma={hp.scalar_gamma():g}, d={hp.d})")
    if args.out:
        write_records_csv(args.out, result.records)
        config = dict(command="rate-check", sizes=list(result.sizes), reps=args.reps,
                      nmc=args.nmc, sweep=args.sweep, pmax=args.pmax, gamma=args.gamma,
                      beta=args.beta, alpha=args.alpha, d=args.d, seed=args.seed,
                      out=str(args.out))
        write_manifest(args.out, argv, args.seed, started, config)
        print(f"wrote {args.out}")
    return 0


def _predictor_for(args, train):
    """Build a per-point predictor from parsed args and a loaded dataset."""
    method = args.method
    is_multi = isinstance(train, MultiSourceDataset)
    is_transfer = isinstance(train, TransferDataset)

    def target_set() -> SampleSet:
        if isinstance(train, SampleSet):
            return train
        return train.q_data

    def pooled() -> SampleSet:
        if isinstance(train, SampleSet):
            return train
        if is_multi:
            from .core import merge_sources
            return pooled_sample_set(merge_sources(train))
        return pooled_sample_set(train)

    if method == "weighted":
        if not is_transfer:
            raise UsageError("weighted needs a training CSV with P/Q origin tags")
        if args.gamma is None:
            raise UsageError("weighted needs --gamma and --beta for the neighbor plan")
        gammas = _parse_floats(args.gamma)
        if len(gammas) != 1:
            raise UsageError("weighted takes a single --gamma value")
        hp = _hyperparams(args, gammas[0])
        plan = minimax_plan(train.n_p, train.n_q, hp)
        return lambda x: weighted_knn_predict(train, plan, x)
    if method == "multisource":
        if not is_multi:
            raise UsageError("multisource needs a training CSV with P1..Pm origin tags")
        if args.gamma is None:
            raise UsageError("multisource needs --gamma (one value, or one per source)")
        gammas = _parse_floats(args.gamma)
        if len(gammas) == 1:
            gammas = gammas * train.m
        hp = _hyperparams(args, tuple(gammas))
        plan = multisource_plan(train.source_sizes, train.n_q, hp)
        return lambda x: multisource_weighted_predict(train, plan, x)
    if method == "adaptive":
        if is_multi:
            return lambda x: multisource_adaptive_predict(train, x)[0]
        if is_transfer:
            return lambda x: adaptive_predict(train, x)[0]
        raise UsageError("adaptive needs origin tags (P/Q or P1..Pm) in the training CSV")
    if method in ("knn", "lepski", "combined"):
        s = pooled() if (method == "combined" or args.pool) else target_set()
        if len(s) == 0:
            raise UsageError(f"{method} has no training rows to use")
        if method == "lepski":
            return lambda x: lepski_predict(s, x, width=args.lepski_width)
        if args.k is not None:
            if not (1 <= args.k <= len(s)):
                raise UsageError(f"--k must be in [1, {len(s)}]")
            k = args.k
        else:
            hp = _hyperparams(args, 1.0 if args.gamma is None
                              else _parse_floats(args.gamma)[0])
            if method == "combined" and is_transfer and args.gamma is not None:
                k = combined_budget_k(train.n_p, train.n_q, hp)
            else:
                k = default_knn_k(len(s), hp)
        return lambda x: knn_predict(s, k, x)
    raise UsageError(f"unknown method {method!r}")


def _cmd_predict(args, argv) -> int:
    started = _now()
    train = read_labeled_csv(args.train)
    if args.d is not None and train.d != args.d:
        raise UsageError(f"--d {args.d} but training data has d={train.d}")
    args.d = train.d
    predictor = _predictor_for(args, train)
    pts = read_points_csv(args.test)
    if pts.shape[1] != train.d:
        raise CsvFormatError(
            f"{args.test}: test dimension {pts.shape[1]} != training dimension {train.d}")
    labels = [int(predictor(x)) for x in pts]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_feature_header(train.d) + ["y_pred"])
        for x, y in zip(pts, labels):
            w.writerow([_fmt(v) for v in x] + [str(y)])
    config = dict(command="predict", method=args.method, train=str(args.train),
                  test=str(args.test), out=str(args.out), gamma=args.gamma,
                  beta=args.beta, alpha=args.alpha, k=args.k, pool=args.pool,
                  lepski_width=args.lepski_width)
    write_manifest(args.out, argv, 0, started, config)
    print(f"wrote {args.out} ({len(labels)} predictions)")
    return 0


def _cmd_eval(args, argv) -> int:
    started = _now()
    if args.pmax is None:
        raise UsageError("eval needs --pmax to define the analytic model")
    if not (0.5 < args.pmax <= 1.0):
        raise UsageError("--pmax must lie in (0.5, 1]")
    if args.n_test < 1:
        raise UsageError("--n-test must be >= 1")
    if args.nmc < 2:
        raise UsageError("--nmc must be >= 2")
    train = read_labeled_csv(args.train)
    if isinstance(train, SampleSet):
        train = TransferDataset(SampleSet.empty(train.d), train)
    elif isinstance(train, MultiSourceDataset):
        from .core import merge_sources
        train = merge_sources(train)
    try:
        hp = HyperParams(alpha=args.alpha, beta=args.beta, gamma=args.gamma, d=train.d)
    except ValueError as e:
        raise UsageError(str(e))
    gamma_sim = args.gamma_sim if args.gamma_sim is not None else args.gamma
    model = make_drift_model(args.pmax, gamma_sim, train.d)
    fitted = fit_method(args.method, train, hp, args.lepski_width)
    rs = RandomSource(args.seed).substream(7)
    test = sample_test_points(model.x_c, args.radius, args.n_test, rs.substream(0))
    acc = classification_accuracy(fitted.predict_batch, model, test)
    est = excess_risk_mc(fitted.predict_batch, model, args.nmc, rs.substream(1))
    print(f"method={args.method} n_p={train.n_p} n_q={train.n_q} d={train.d}")
    print(f"accuracy (vs oracle, {args.n_test} ball test points) = {acc:.4f}")
    print(f"excess risk (MC, n={args.nmc}) = {est.value:.6e} +- {est.std_error:.2e}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "p_max", "gamma_sim", "gamma", "beta", "alpha", "d",
                        "n_p", "n_q", "n_test", "accuracy", "excess_risk",
                        "excess_risk_se", "n_mc", "seed"])
            w.writerow([args.method, repr(args.pmax), repr(float(gamma_sim)),
                        repr(args.gamma), repr(args.beta), repr(args.alpha), train.d,
                        train.n_p, train.n_q, args.n_test, repr(acc), repr(est.value),
                        repr(est.std_error), args.nmc, args.seed])
        config = dict(command="eval", method=args.method, train=str(args.train),
                      pmax=args.pmax, gamma_sim=gamma_sim, gamma=args.gamma,
                      beta=args.beta, alpha=args.alpha, n_test=args.n_test,
                      radius=args.radius, nmc=args.nmc, seed=args.seed, out=str(args.out))
        write_manifest(args.out, argv, args.seed, started, config)
        print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "rate-check": _cmd_rate_check,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
}


def run_cli(argv: list[str] | None = None) -> int:
    """Parse and run one command; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args, argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CsvFormatError, OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
