"""Command-line front end.

Every command writes CSV to ``--out`` (stdout by default).  The first line
is ``#`` followed by a JSON object holding the full configuration, the
package version, and a results summary, so a file is enough to rerun it.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from contextlib import nullcontext

import numpy as np

from . import __version__
from .dataset import DataError, load_csv, make_folds
from .experiments import bench, curve, kfold_experiment, prepare
from .fd import DEFAULT_STEP, emit_fd_table
from .grid import ALO, KFOLD, grid_search, log_grid
from .models import make_loss, make_regularizer
from .solver import NumericalError
from .trust_region import SUBPROBLEM_FAILURE, TrustRegionConfig
from .tune import tune

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CHECK_THRESHOLD = 1e-3

logger = logging.getLogger("alotune")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _points(text: str) -> list[list[float]]:
    # "1,0.5;2,1.25" -> two points
    return [_floats(chunk) for chunk in text.split(";") if chunk.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("data")
    g.add_argument("--data", required=True, help="CSV file with features and response")
    g.add_argument("--response", default="-1", help="response column: header name or index (default last)")
    g.add_argument("--task", choices=["regression", "classification"],
                   help="default follows --loss")
    g.add_argument("--no-header", action="store_true", help="the CSV has no header row")
    g.add_argument("--no-intercept", action="store_true", help="do not add an unpenalized intercept")
    m = common.add_argument_group("model")
    m.add_argument("--loss", choices=["squared", "logistic"], help="default follows --task")
    m.add_argument("--reg", choices=["ridge", "group_ridge", "bridge"], default="ridge")
    m.add_argument("--groups", type=_ints, help="group index per feature, comma separated")
    m.add_argument("--delta", type=float, default=0.01, help="bridge patch half-width")
    m.add_argument("--lambda0", type=_floats, help="starting hyperparameters, comma separated")
    o = common.add_argument_group("optimizer")
    o.add_argument("--max-iter", type=int, default=100)
    o.add_argument("--grad-tol", type=float, default=1e-6)
    o.add_argument("--delta0", type=float, default=1.0, help="initial trust radius")
    o.add_argument("--delta-max", type=float, default=100.0)
    r = common.add_argument_group("run")
    r.add_argument("--grid-min", type=float, default=1e-3)
    r.add_argument("--grid-max", type=float, default=1e3)
    r.add_argument("--grid-points", type=int, default=100)
    r.add_argument("--folds", type=int, default=5)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads")
    r.add_argument("--out", default="-", help="output file (default stdout)")
    r.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="alotune", description="Tune penalized GLMs by minimizing approximate leave-one-out.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("tune", parents=[common], help="trust-region minimization of ALO")
    sub.add_parser("curve", parents=[common], help="ALO and its derivatives over a log grid")
    p = sub.add_parser("grid", parents=[common], help="grid-search baseline")
    p.add_argument("--criterion", choices=[ALO, KFOLD], default=ALO)
    p = sub.add_parser("check", parents=[common], help="finite-difference check of derivatives")
    p.add_argument("--at", type=_points, help='points such as "1,0.5;2,1.25" (default: 5 log-spaced)')
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p = sub.add_parser("bench", parents=[common], help="time tune against grid search")
    p.add_argument("--repeats", type=int, default=10)
    sub.add_parser("kfold", parents=[common], help="per-fold tuning with held-out loss")
    return parser


def _resolve_model(args):
    task, loss = args.task, args.loss
    if loss is None:
        loss = "logistic" if task == "classification" else "squared"
    if task is None:
        task = "classification" if loss == "logistic" else "regression"
    if (loss == "logistic") != (task == "classification"):
        raise UsageError(f"loss {loss!r} does not fit task {task!r}")
    if args.reg == "group_ridge" and not args.groups:
        raise UsageError("--reg group_ridge needs --groups")
    if args.reg != "group_ridge" and args.groups:
        raise UsageError("--groups only applies to --reg group_ridge")
    args.task, args.loss = task, loss
    try:
        reg = make_regularizer(args.reg, args.groups, args.delta)
        cfg = TrustRegionConfig(delta0=args.delta0, delta_max=args.delta_max,
                                grad_tol=args.grad_tol, max_iter=args.max_iter)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.lambda0 is not None and len(args.lambda0) != reg.n_hyper:
        raise UsageError(f"--lambda0 needs {reg.n_hyper} values for {args.reg}")
    if args.grid_points < 1 or not 0 < args.grid_min <= args.grid_max:
        raise UsageError("need --grid-points >= 1 and 0 < --grid-min <= --grid-max")
    return make_loss(loss), reg, cfg


def _load(args, prepared=True):
    resp = args.response
    ds = load_csv(args.data, resp if not resp.lstrip("-").isdigit() else int(resp),
                  has_header=not args.no_header, task=args.task)
    return prepare(ds, not args.no_intercept) if prepared else ds


def _lam_cols(q):
    return [f"lambda{j + 1}" for j in range(q)]


def _fl(x):
    return np.asarray(x, dtype=float).tolist()


def _run_tune(args, loss, reg, cfg):
    ds = _load(args)
    res = tune(ds, loss, reg, args.lambda0, cfg)
    q = reg.n_hyper
    header = ["iter"] + _lam_cols(q) + ["f", "grad_norm", "delta", "rho", "step_norm", "accepted"]
    rows = [[i] + _fl(r.lam) + [r.f, r.grad_norm, r.delta, r.rho, r.step_norm, int(r.accepted)]
            for i, r in enumerate(res.trace.records)]
    results = {
        "status": res.status,
        "lambda_star": _fl(res.lambda_star),
        "f_star": res.f_star,
        "gradient": _fl(res.gradient),
        "hessian": _fl(res.hessian),
        "n_iter": len(res.trace.records),
        "n_evals": res.trace.n_evals,
        "beta": _fl(res.beta),
        "beta_names": [c.name for c in ds.column_meta],
    }
    code = EXIT_NUMERIC if res.status == SUBPROBLEM_FAILURE else EXIT_OK
    return header, rows, results, code


def _run_curve(args, loss, reg, cfg):
    if reg.n_hyper != 1:
        raise UsageError("curve needs a single-hyperparameter regularizer")
    ds = _load(args)
    lams = log_grid(args.grid_min, args.grid_max, args.grid_points)[0]
    data = curve(ds, loss, reg, lams)
    n_failed = int(np.isnan(data[:, 1]).sum())
    return ["lambda", "f", "df", "d2f"], data.tolist(), {"n_failed": n_failed}, EXIT_OK


def _run_grid(args, loss, reg, cfg):
    ds = _load(args)
    axes = log_grid(args.grid_min, args.grid_max, args.grid_points, reg.n_hyper)
    folds = make_folds(ds.n, args.folds, args.seed) if args.criterion == KFOLD else None
    res = grid_search(ds, loss, reg, axes, args.criterion, folds)
    header = _lam_cols(reg.n_hyper) + [args.criterion, "failed", "best"]
    rows = [_fl(pt.lam) + [pt.value, int(pt.failed), int(i == res.best)]
            for i, pt in enumerate(res.points)]
    best = res.best_point
    return header, rows, {"best_lambda": _fl(best.lam), "best_value": best.value,
                          "n_failed": sum(pt.failed for pt in res.points)}, EXIT_OK


def _run_check(args, loss, reg, cfg):
    ds = _load(args)
    q = reg.n_hyper
    if args.at:
        pts = args.at
        if any(len(pt) != q for pt in pts):
            raise UsageError(f"every --at point needs {q} values")
    else:
        pts = [[v] * q for v in np.geomspace(max(args.grid_min, 1e-2), min(args.grid_max, 1e2), 5)]
    report = emit_fd_table(ds, loss, reg, pts, args.step)
    worst = report.worst_rel_error
    ok = not report.any_failed and worst <= CHECK_THRESHOLD
    buf = io.StringIO(report.to_csv())
    rows = list(csv.reader(buf))
    results = {"worst_rel_error": worst, "threshold": CHECK_THRESHOLD,
               "any_failed": report.any_failed, "passed": ok}
    return rows[0], rows[1:], results, EXIT_OK if ok else EXIT_NUMERIC


def _run_bench(args, loss, reg, cfg):
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    ds = _load(args)
    res = bench(ds, loss, reg, args.repeats, args.grid_points, args.grid_min, args.grid_max,
                args.lambda0, cfg)
    header = ["method", "mean_seconds", "std_seconds"] + _lam_cols(reg.n_hyper) + ["alo"]
    rows = [[b.method, b.mean_seconds, b.std_seconds] + _fl(b.lam) + [b.alo] for b in res]
    return header, rows, {"repeats": args.repeats, "n": ds.n, "p": ds.p}, EXIT_OK


def _run_kfold(args, loss, reg, cfg):
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    ds = _load(args, prepared=False)
    res = kfold_experiment(ds, loss, reg, args.folds, args.seed, args.lambda0, cfg,
                           intercept=not args.no_intercept)
    header = ["fold"] + _lam_cols(reg.n_hyper) + ["alo", "test_error", "status"]
    rows = [[r.fold] + _fl(r.lam) + [r.alo, r.test_error, r.status] for r in res]
    errs = [r.test_error for r in res]
    results = {"mean_test_error": float(np.mean(errs)), "std_test_error": float(np.std(errs))}
    code = EXIT_NUMERIC if any(r.status == SUBPROBLEM_FAILURE for r in res) else EXIT_OK
    return header, rows, results, code


COMMANDS = {
    "tune": _run_tune,
    "curve": _run_curve,
    "grid": _run_grid,
    "check": _run_check,
    "bench": _run_bench,
    "kfold": _run_kfold,
}


def _write(args, header, rows, meta):
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True, default=_fl) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    text = buf.getvalue()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _config_echo(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out", "verbose")}
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        loss, reg, cfg = _resolve_model(args)
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            limiter = threadpool_limits(limits=args.threads)
        else:
            limiter = nullcontext()
        with limiter:
            header, rows, results, code = COMMANDS[args.command](args, loss, reg, cfg)
        meta = {"version": __version__, "command": args.command, "seed": args.seed,
                "config": _config_echo(args), "trust_region": cfg.to_dict(),
                "model": reg.config(), "results": results}
        _write(args, header, rows, meta)
        return code
    except UsageError as exc:
        print(f"alotune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"alotune: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"alotune: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"alotune: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
