# cli.py
"""
Command-line surface: threshold formulas, single recovery trials, phase sweeps (CSV + SVG),
null-space unicity checks, the small-ball estimate and the subspace counterexample.

Exit codes: 0 success, 1 usage or configuration error, 2 negative experimental result.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict
from typing import Any, Sequence

import matplotlib
import numpy as np
import scipy

from config import AppConfig, SolverDefaults, load_config, threads_override
from errors import UlabError
from harness import (
    METHODS,
    TRIALS_HEADER,
    TrialSpec,
    phase_sweep,
    run_trial,
    write_crossings_csv,
    write_csv,
    write_summary_csv,
)
from jobs import JOB_STORE
from job_io import ensure_dir, write_json
from linalg import child_seed
from measurement import sample_gaussian_operator
from plots import plot_phase_curve
from solvers import SolverParams, UnicityVerdict, nullspace_rank_search
from theory import (
    ProblemDims,
    small_ball_estimate,
    small_ball_reference,
    small_ball_standard_error,
    subspace_counterexample,
    threshold_report,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NEGATIVE = 2


def _g(x: float) -> str:
    return f"{x:.6g}"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; usage errors here exit 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(raw: str) -> int:
    try:
        val = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {raw!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def _nonnegative_int(raw: str) -> int:
    try:
        val = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {raw!r}") from None
    if val < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {val}")
    return val


def _positive_float(raw: str) -> float:
    try:
        val = float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {raw!r}") from None
    if not val > 0.0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {val}")
    return val


# ----------------------------
# Parser
# ----------------------------

def build_parser(app: AppConfig, defaults: SolverDefaults) -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_nonnegative_int, default=app.seed, help=f"master seed (default: {app.seed})")
    common.add_argument("--threads", type=_positive_int, default=app.threads, help="worker processes (default: CPU count)")
    common.add_argument("--out", default=app.out_dir, help=f"output directory (default: {app.out_dir})")
    common.add_argument(
        "--log-level",
        default=app.log_level,
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
    )

    solver = _Parser(add_help=False)
    solver.add_argument("--max-iters", type=_positive_int, default=defaults.max_iters)
    solver.add_argument("--restarts", type=_positive_int, default=defaults.restarts)

    parser = _Parser(prog="ulab", description="Low-rank matrix recovery experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("thresholds", parents=[common], help="print the measurement thresholds for (n, r)")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--r", type=_positive_int, required=True)

    p = sub.add_parser("recover", parents=[common, solver], help="run one seeded recovery trial")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--r", type=_positive_int, required=True)
    p.add_argument("--m", type=_nonnegative_int, required=True)
    p.add_argument("--method", choices=METHODS, default="rank_min")
    p.add_argument("--trial", type=_nonnegative_int, default=0)

    p = sub.add_parser("phase", parents=[common, solver], help="success-rate sweep over m, writes CSVs and SVGs")
    p.add_argument("--n", type=_positive_int, nargs="+", required=True)
    p.add_argument("--r", type=_positive_int, nargs="+", required=True)
    p.add_argument("--m-min", type=_nonnegative_int, required=True)
    p.add_argument("--m-max", type=_nonnegative_int, required=True)
    p.add_argument("--m-step", type=_positive_int, default=1)
    p.add_argument("--methods", choices=METHODS, nargs="+", default=["rank_min", "nuclear_min"])
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--timing", action="store_true", help="record wall times (trials.csv then differs between runs)")

    p = sub.add_parser("unicity", parents=[common, solver], help="search null(A) for a unit-norm rank-2r matrix")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--r", type=_positive_int, required=True)
    p.add_argument("--m", type=_nonnegative_int, required=True)
    p.add_argument("--k", type=_positive_int, default=None, help="search rank (default: min(2r, n))")

    p = sub.add_parser("smallball", parents=[common], help="estimate P(|<A, X>| < eps) for Gaussian A")
    p.add_argument("--n", type=_positive_int, default=8)
    p.add_argument("--eps", type=_positive_float, required=True)
    p.add_argument("--trials", type=_positive_int, default=100_000)

    p = sub.add_parser("counterexample", parents=[common], help="random (d+1)-dim subspace vs m functionals")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--d", type=_nonnegative_int, required=True)
    p.add_argument("--m", type=_nonnegative_int, required=True)

    return parser


def _solver_params(args: argparse.Namespace, defaults: SolverDefaults, seed: int) -> SolverParams:
    return SolverParams(
        max_iters=args.max_iters,
        constraint_tol=defaults.constraint_tol,
        step=defaults.step,
        restarts=args.restarts,
        inner_tol=defaults.inner_tol,
        seed=seed,
    )


# ----------------------------
# Commands
# ----------------------------

def cmd_thresholds(args: argparse.Namespace, parser: _Parser) -> int:
    if args.r > args.n:
        parser.error(f"need r <= n, got n={args.n}, r={args.r}")
    report = threshold_report(ProblemDims(args.n, args.r))
    if not report.strong_hypothesis_ok:
        print(f"warning: r={args.r} > n/2={args.n / 2:g}; the strong-recovery bound does not apply", file=sys.stderr)

    print(f"n={report.n} r={report.r}")
    print(f"strong={report.strong if report.strong is not None else 'n/a'}")
    print(f"weak={report.weak}")
    print(f"manifold_r={report.manifold_r}")
    print(f"manifold_2r={report.manifold_2r if report.manifold_2r is not None else 'n/a'}")
    print(f"unit_manifold_2r={report.unit_manifold_2r if report.unit_manifold_2r is not None else 'n/a'}")
    print(f"nuclear_ref={report.nuclear_ref}")
    print(f"nuclear_lower={report.nuclear_lower}")
    return EXIT_OK


def cmd_recover(args: argparse.Namespace, defaults: SolverDefaults) -> int:
    spec = TrialSpec(
        n=args.n,
        r=args.r,
        m=args.m,
        method=args.method,
        master_seed=args.seed,
        trial_index=args.trial,
        solver=_solver_params(args, defaults, 0),
    )
    outcome = run_trial(spec)
    print(",".join(TRIALS_HEADER))
    print(",".join([
        outcome.method, str(outcome.n), str(outcome.r), str(outcome.m), str(outcome.trial), str(outcome.seed),
        "1" if outcome.success else "0", _g(outcome.rel_error), _g(outcome.residual), _g(outcome.wall_time),
    ]))
    if outcome.note:
        print(f"note: {outcome.note}", file=sys.stderr)
    return EXIT_OK if outcome.success else EXIT_NEGATIVE


def _package_versions() -> dict[str, str]:
    return {"numpy": np.__version__, "scipy": scipy.__version__, "matplotlib": matplotlib.__version__}


def cmd_phase(args: argparse.Namespace, app: AppConfig, defaults: SolverDefaults, parser: _Parser) -> int:
    if args.m_max < args.m_min:
        parser.error(f"--m-max ({args.m_max}) must be >= --m-min ({args.m_min})")
    m_range = list(range(args.m_min, args.m_max + 1, args.m_step))
    workers = threads_override() or args.threads
    if workers != args.threads:
        logger.info("ULAB_THREADS=%d overrides --threads %d", workers, args.threads)
    solver = _solver_params(args, defaults, 0)

    out = ensure_dir(args.out)

    def _print_progress(event: dict[str, Any]) -> None:
        if event.get("type") != "progress":
            return
        prog = event["progress"]
        step = max(1, prog["total"] // 10)
        if prog["done"] % step == 0 or prog["done"] == prog["total"]:
            print(f"[{prog['done']}/{prog['total']}] trials done, {prog['failures']} failed")

    table = phase_sweep(
        n_list=args.n,
        r_list=args.r,
        m_range=m_range,
        methods=args.methods,
        trials_per_cell=args.trials,
        master_seed=args.seed,
        workers=workers,
        solver=solver,
        progress=JOB_STORE,
        listener=_print_progress,
        record_timing=args.timing,
    )

    write_csv(table, os.path.join(out, app.trials_csv_name))
    write_summary_csv(table, os.path.join(out, app.summary_csv_name))
    write_crossings_csv(table, os.path.join(out, app.crossings_csv_name))
    for n, r, method in table.curves:
        plot_phase_curve(table, n, r, [method], os.path.join(out, app.svg_name(method, n, r)))

    write_json(os.path.join(out, app.meta_json_name), {
        "command": "phase",
        "seed": args.seed,
        "grid": {"n": args.n, "r": args.r, "m": m_range, "methods": args.methods, "trials": args.trials},
        "solver": asdict(solver),
        "workers": workers,
        "timing": args.timing,
        "versions": _package_versions(),
    })

    print(f"wrote {len(table.outcomes)} trials to {out}")
    for (n, r, method) in table.curves:
        m_star = table.crossings.get((n, r, method))
        report = threshold_report(ProblemDims(n, r))
        shown = _g(m_star) if m_star is not None else "none"
        print(f"{method} n={n} r={r}: m*={shown} weak={report.weak} nuclear_ref={report.nuclear_ref}")
    return EXIT_OK


def cmd_unicity(args: argparse.Namespace, defaults: SolverDefaults, parser: _Parser) -> int:
    if args.r > args.n:
        parser.error(f"need r <= n, got n={args.n}, r={args.r}")
    if args.m > args.n * args.n:
        parser.error(f"need m <= n^2={args.n * args.n}, got m={args.m}")
    k = args.k if args.k is not None else min(2 * args.r, args.n)
    if k > args.n:
        parser.error(f"need k <= n, got k={k}")

    op = sample_gaussian_operator(args.n, args.m, child_seed(args.seed, 0))
    search = nullspace_rank_search(op, k, _solver_params(args, defaults, child_seed(args.seed, 1)))
    verdict = search.verdict
    print(f"verdict={verdict.value} objective={_g(search.objective)} n={args.n} k={k} m={args.m}")
    return EXIT_OK if verdict is UnicityVerdict.NOT_FOUND else EXIT_NEGATIVE


def cmd_smallball(args: argparse.Namespace) -> int:
    estimate = small_ball_estimate(args.n, args.eps, args.trials, args.seed)
    reference = small_ball_reference(args.eps)
    se = small_ball_standard_error(args.eps, args.trials)
    print(f"estimate={_g(estimate)} reference={_g(reference)} stderr={_g(se)} ratio_to_eps={_g(estimate / args.eps)}")
    return EXIT_OK


def cmd_counterexample(args: argparse.Namespace) -> int:
    found = subspace_counterexample(args.n, args.d, args.m, args.seed)
    predicted = args.m <= args.d
    print("TRUE" if found else "FALSE")
    return EXIT_OK if found == predicted else EXIT_NEGATIVE


# ----------------------------
# Entry
# ----------------------------

def main(argv: Sequence[str] | None = None) -> int:
    try:
        app, defaults = load_config()
    except UlabError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE

    parser = build_parser(app, defaults)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "thresholds":
            return cmd_thresholds(args, parser)
        if args.command == "recover":
            return cmd_recover(args, defaults)
        if args.command == "phase":
            return cmd_phase(args, app, defaults, parser)
        if args.command == "unicity":
            return cmd_unicity(args, defaults, parser)
        if args.command == "smallball":
            return cmd_smallball(args)
        if args.command == "counterexample":
            return cmd_counterexample(args)
    except SystemExit as e:
        return int(e.code or 0)
    except ValueError as e:
        # DomainError / DimensionError / ConfigError: bad inputs that got past argparse
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except UlabError as e:
        print(f"failed: {e}", file=sys.stderr)
        return EXIT_NEGATIVE
    parser.error(f"unknown command {args.command!r}")
    return EXIT_USAGE
