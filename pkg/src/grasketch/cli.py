"""Command-line interface.

Exit codes: 0 success, 2 usage or input error, 3 empty sketch,
4 incompatible merge, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import analysis, estimators, poisson_sim
from ._validation import KINDS, SMOOTHING_MODES, check_m, check_seed
from .exceptions import (
    CorruptSketchError,
    EmptySketchError,
    GraSketchError,
    IncompatibleSketchError,
    InvalidParameterError,
    NumericalFailureError,
)
from .sketch import deserialize, merge, new_sketch, serialize

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EMPTY = 3
EXIT_INCOMPATIBLE = 4
EXIT_NUMERIC = 5

ESTIMATOR_CHOICES = ("tau-gra", "df", "ffgm", "lang", "fm")
_BATCH = 1 << 16


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _seed(text):
    try:
        return check_seed(text)
    except InvalidParameterError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _m(text):
    try:
        return check_m(int(text))
    except (ValueError, InvalidParameterError) as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _add_sketch_flags(p):
    p.add_argument("--sketch", choices=KINDS, default="loglog")
    p.add_argument("--m", type=_m, default=4096)
    p.add_argument("--seed", type=_seed, default=0, help="decimal or 0x-hex 64-bit value")
    p.add_argument("--smoothing", choices=SMOOTHING_MODES, default=None)


def _add_estimator_flags(p):
    p.add_argument("--estimator", choices=ESTIMATOR_CHOICES, default="tau-gra")
    p.add_argument("--tau", type=float, default=None, help="default: variance-minimizing tau")


def _add_format(p, default="text"):
    p.add_argument("--format", choices=("json", "csv", "text"), default=default)


def build_parser():
    parser = argparse.ArgumentParser(prog="grasketch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="sketch newline-delimited keys and estimate their cardinality")
    p.add_argument("input", nargs="?", default="-", help="input path or - for stdin")
    _add_sketch_flags(p)
    _add_estimator_flags(p)
    _add_format(p)
    p.add_argument("--output", help="also write the sketch to this path")
    p.add_argument("--empty-as-zero", action="store_true", help="read EMPTY LogLog registers as X=0")

    p = sub.add_parser("merge", help="merge sketch files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--output", required=True)

    p = sub.add_parser("inspect", help="describe a sketch file and estimate its cardinality")
    p.add_argument("path")
    _add_estimator_flags(p)
    _add_format(p)
    p.add_argument("--empty-as-zero", action="store_true")

    p = sub.add_parser("variance-curve", help="limiting m * relvar as a function of tau (CSV)")
    p.add_argument("--sketch", choices=KINDS, default="loglog")
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=301)
    p.add_argument("--output")

    p = sub.add_parser("simulate", help="Poissonized Monte Carlo against the closed forms")
    _add_sketch_flags(p)
    _add_estimator_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--mode", choices=("estimator", "moments"), default="estimator")
    p.add_argument("--jobs", type=int, default=1)
    _add_format(p, "json")
    p.add_argument("--output")

    p = sub.add_parser("optimize-tau", help="tau minimizing the limiting variance")
    p.add_argument("--sketch", choices=KINDS, default="loglog")
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    _add_format(p)

    p = sub.add_parser("calibrate", help="Monte Carlo constant for the Lang or FM estimator")
    p.add_argument("--estimator", choices=("fm", "lang"), required=True)
    p.add_argument("--m", type=_m, default=1024)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--jobs", type=int, default=1)
    _add_format(p)
    return parser


# --- helpers -------------------------------------------------------------------


def _open_input(path):
    if path == "-":
        return sys.stdin.buffer
    try:
        return open(path, "rb")
    except OSError as e:
        raise _Fail(EXIT_USAGE, f"cannot read {path}: {e.strerror}") from None


def _iter_batches(stream):
    batch = []
    for line in stream:
        if line.endswith(b"\n"):
            line = line[:-1]
        batch.append(line)
        if len(batch) >= _BATCH:
            yield batch
            batch = []
    if batch:
        yield batch


def _read_sketch(path):
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise _Fail(EXIT_USAGE, f"cannot read {path}: {e.strerror}") from None
    try:
        return deserialize(data)
    except CorruptSketchError as e:
        raise _Fail(EXIT_USAGE, f"{path}: {e}") from None


def _write_bytes(path, data):
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise _Fail(EXIT_USAGE, f"cannot write {path}: {e.strerror}") from None


def _emit(rows, fmt, out, fields=None):
    """Print a list of flat dicts as json / csv / ``key: value`` text."""
    if fmt == "json":
        payload = rows[0] if len(rows) == 1 else rows
        out.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    elif fmt == "csv":
        w = csv.DictWriter(out, fieldnames=fields or list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    else:
        for row in rows:
            for k, v in row.items():
                out.write(f"{k}: {v}\n")


def _estimate_sketch(sk, args):
    if sk.is_empty:
        raise _Fail(EXIT_EMPTY, "sketch is empty; no estimate")
    return estimators.estimate(sk, args.estimator, args.tau, empty_as_zero=args.empty_as_zero)


# --- subcommands ------------------------------------------------------------------


def cmd_estimate(args, out):
    estimators.check_estimator_for(args.sketch, args.estimator)
    sk = new_sketch(args.sketch, args.m, args.smoothing, args.seed)
    stream = _open_input(args.input)
    try:
        for batch in _iter_batches(stream):
            sk.update(batch)
    finally:
        if stream is not sys.stdin.buffer:
            stream.close()
    if args.output:
        _write_bytes(args.output, serialize(sk))
    est = _estimate_sketch(sk, args)
    _emit([est.as_dict()], args.format, out)
    return EXIT_OK


def cmd_merge(args, out):
    if len(args.paths) < 2:
        raise _Fail(EXIT_USAGE, "merge needs at least two sketch files")
    sketches = [_read_sketch(p) for p in args.paths]
    acc = sketches[0]
    for other in sketches[1:]:
        acc = merge(acc, other)
    _write_bytes(args.output, serialize(acc))
    return EXIT_OK


def cmd_inspect(args, out):
    sk = _read_sketch(args.path)
    row = {
        "kind": sk.kind,
        "m": sk.m,
        "seed": sk.seed,
        "smoothing": sk.offsets.mode,
        "offset_seed": sk.offsets.rng_seed,
    }
    if sk.kind == "loglog":
        row["empty_registers"] = int((sk.registers == 0).sum())
    else:
        row["set_bits"] = int(estimators.ones_count(sk.bitmaps).sum())
    if not sk.is_empty:
        est = estimators.estimate(sk, args.estimator, args.tau, empty_as_zero=args.empty_as_zero)
        row.update(est.as_dict())
    _emit([row], args.format, out)
    return EXIT_OK


VARIANCE_CURVE_FIELDS = ("tau", "limiting_relvar_times_m", "cramer_rao_constant")


def cmd_variance_curve(args, out):
    curve = analysis.variance_curve(args.sketch, args.lo, args.hi, args.steps)
    rows = [
        {"tau": repr(t), "limiting_relvar_times_m": repr(v), "cramer_rao_constant": repr(curve.cramer_rao)}
        for t, v in curve.points
    ]
    if args.output:
        with open(args.output, "w", newline="") as f:
            _emit(rows, "csv", f, VARIANCE_CURVE_FIELDS)
    else:
        _emit(rows, "csv", out, VARIANCE_CURVE_FIELDS)
    return EXIT_OK


def cmd_simulate(args, out):
    if args.trials < 1:
        raise InvalidParameterError(f"trials must be a positive integer, got {args.trials}")
    tau = analysis.TAU_STAR[args.sketch] if args.tau is None else args.tau
    cfg = poisson_sim.SimConfig(
        kind=args.sketch,
        m=args.m,
        lam=args.lam,
        tau=tau,
        trials=args.trials,
        seed=args.seed,
        smoothing=args.smoothing,
        estimator=args.estimator,
    )
    if args.mode == "moments":
        report = poisson_sim.empirical_gra_moments(cfg, n_jobs=args.jobs)
    else:
        report = poisson_sim.empirical_estimator_stats(cfg, n_jobs=args.jobs)
    if args.format == "json":
        text = report.to_json() + "\n"
    elif args.format == "csv":
        text = report.to_csv()
    else:
        text = (
            f"statistic: {report.statistic}\n"
            f"config: {json.dumps(report.config, sort_keys=True)}\n"
            f"mean:  empirical {report.empirical_mean:.6f}  predicted {report.predicted_mean}"
            f"  stderr {report.stderr_of_estimate:.3g}\n"
            f"m*var: empirical {report.empirical_relvar_times_m:.6f}  predicted {report.predicted}"
            f"  stderr {report.stderr_of_relvar:.3g}\n"
        )
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_optimize_tau(args, out):
    tau_star, v_star = analysis.optimize_tau(args.sketch, args.lo, args.hi, args.tol)
    cr = analysis.cramer_rao(args.sketch)
    row = {
        "sketch": args.sketch,
        "tau_star": tau_star,
        "v_star": v_star,
        "cramer_rao": cr,
        "gap_percent": 100.0 * (v_star / cr - 1.0),
    }
    _emit([row], args.format, out)
    return EXIT_OK


def cmd_calibrate(args, out):
    if args.trials < 2:
        raise InvalidParameterError(f"trials must be >= 2, got {args.trials}")
    kappa, se = poisson_sim.calibrate(args.estimator, args.m, args.trials, args.seed, args.jobs)
    shipped = estimators.KAPPA_FM if args.estimator == "fm" else estimators.KAPPA_LANG
    row = {
        "estimator": args.estimator,
        "m": args.m,
        "trials": args.trials,
        "seed": args.seed,
        "kappa": kappa,
        "stderr": se,
        "shipped_kappa": shipped,
    }
    _emit([row], args.format, out)
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "merge": cmd_merge,
    "inspect": cmd_inspect,
    "variance-curve": cmd_variance_curve,
    "simulate": cmd_simulate,
    "optimize-tau": cmd_optimize_tau,
    "calibrate": cmd_calibrate,
}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except _Fail as e:
        print(f"grasketch: {e}", file=sys.stderr)
        return e.code
    except EmptySketchError as e:
        print(f"grasketch: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except IncompatibleSketchError as e:
        print(f"grasketch: {e}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except NumericalFailureError as e:
        print(f"grasketch: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GraSketchError, ValueError) as e:
        print(f"grasketch: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry_point():
    sys.exit(main())
