"""Command-line interface: ``clusterlevel test | simulate | power``.

Exit codes: 0 ran, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
import time
from importlib import resources
from typing import Sequence

from . import competing
from .data import DataError, SchemaSpec, load_dataset
from .dgp import ConfigError, parse_sigma
from .montecarlo import McConfig, default_jobs, parse_grid, power_curve, rows_to_csv, run_mc
from .wcr import WcrResult, wcr_test

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
SCHEMA_VERSION = "1.0"
METHODS = ("wcr", "nr", "im", "mnw")
DEFAULT_B = {"wcr": 1000, "nr": 1000, "im": 1000, "mnw": 399}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _alpha(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clusterlevel", description="Tests for the level of clustering in a linear regression.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="run a test on a CSV dataset")
    t.add_argument("--data", required=True, help="CSV file with a header row")
    t.add_argument("--outcome", required=True)
    t.add_argument("--regressor", required=True)
    t.add_argument("--controls", default="", help="comma-separated control columns")
    t.add_argument("--cluster", required=True)
    t.add_argument("--subcluster", required=True)
    t.add_argument("--method", required=True, choices=METHODS)
    t.add_argument("--alpha", type=_alpha, default=0.05)
    t.add_argument("--B", type=_positive_int, default=None,
                   help="sign changes or bootstrap draws (default 1000; 399 for mnw)")
    t.add_argument("--seed", type=_seed, default=None)
    t.add_argument("--format", choices=("text", "json"), default="text")

    def sim_flags(s, grid: bool):
        s.add_argument("--model", required=True, choices=("1", "2", "appendixB"))
        s.add_argument("--r", type=_positive_int, default=None)
        s.add_argument("--qk", type=_positive_int, default=None)
        s.add_argument("--nj", type=_positive_int, default=None)
        if grid:
            s.add_argument("--rho-grid", required=True, help="START:STOP:STEP")
        else:
            s.add_argument("--rho", type=float, default=0.0)
        s.add_argument("--phi", type=float, default=None)
        s.add_argument("--sigma", default=None, help='scale overrides, e.g. "cluster1=10"')
        s.add_argument("--unit-variance", action="store_true",
                       help="scale Model 1's AR(1) term to unit stationary variance")
        s.add_argument("--tests", default="nr,wcr,im,mnw")
        s.add_argument("--reps", type=_positive_int, default=1000)
        s.add_argument("--alpha", type=_alpha, default=0.05)
        s.add_argument("--seed", type=_seed, default=None)
        s.add_argument("--jobs", type=_positive_int, default=None, help="worker processes (default $WCR_JOBS or 1)")

    sim_flags(sub.add_parser("simulate", help="Monte Carlo rejection rates for one design"), grid=False)
    sim_flags(sub.add_parser("power", help="rejection rates over a grid of rho"), grid=True)
    return p


def _split(text: str) -> list[str]:
    return [c.strip() for c in text.split(",") if c.strip()]


def _run_method(ds, method: str, alpha: float, B: int, seed: int):
    if method == "wcr":
        return wcr_test(ds, alpha, B, seed)
    if method == "nr":
        return competing.nr_test(ds, alpha, B, seed)
    if method == "im":
        return competing.im_test(ds, alpha, B, seed)
    return competing.mnw_test(ds, alpha, B, seed)


def build_report(method: str, result, alpha: float, B: int, seed: int,
                 invocation: dict | None = None) -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "statistic": float(result.statistic),
        "p_value": float(result.p_value),
        "reject": bool(result.reject),
        "alpha": alpha,
        "B": B,
        "seed": seed,
    }
    if isinstance(result, WcrResult):
        report["group_mode"] = result.group_mode
        report["draws"] = result.B
        report["per_cutoff"] = [
            {"m": c.m, "statistic": c.statistic, "p_value": c.p_value} for c in result.per_cutoff
        ]
    else:
        report["draws"] = int(result.draws) if result.draws is not None else B
    if invocation is not None:
        report["invocation"] = invocation
    return report


def format_text(report: dict) -> str:
    lines = [
        f"method      {report['method']}",
        f"statistic   {report['statistic']:.6g}",
        f"p-value     {report['p_value']:.3f}",
        f"decision    {'reject' if report['reject'] else 'fail to reject'} at alpha = {report['alpha']:g}",
        f"B           {report['B']}",
        f"seed        {report['seed']}",
    ]
    if "invocation" in report:
        flags = " ".join(f"--{k}={v}" for k, v in report["invocation"].items() if k != "command" and v not in (None, ""))
        lines.append(f"flags       {flags}")
    if "per_cutoff" in report:
        lines.append("")
        lines.append(f"{'m':>4}  {'T':>8}  {'p':>6}")
        for c in report["per_cutoff"]:
            lines.append(f"{c['m']:>4}  {c['statistic']:>8.4f}  {c['p_value']:>6.3f}")
    return "\n".join(lines)


def load_schema() -> dict:
    return json.loads(resources.files("clusterlevel").joinpath("report.schema.json").read_text())


def cmd_test(args, out) -> int:
    seed = args.seed if args.seed is not None else secrets.randbits(32)
    B = args.B if args.B is not None else DEFAULT_B[args.method]
    schema = SchemaSpec(args.outcome, args.regressor, args.cluster, args.subcluster, tuple(_split(args.controls)))
    ds = load_dataset(args.data, schema)
    result = _run_method(ds, args.method, args.alpha, B, seed)
    invocation = {k: v for k, v in vars(args).items()} | {"B": B, "seed": seed}
    report = build_report(args.method, result, args.alpha, B, seed, invocation)
    if args.format == "json":
        out.write(json.dumps(report, indent=2) + "\n")
    else:
        out.write(format_text(report) + "\n")
    return EXIT_OK


def _mc_config(args, rho: float) -> McConfig:
    defaults = (4, 12, 100) if args.model == "appendixB" else (None, None, None)
    r, qk, nj = (v if v is not None else d for v, d in zip((args.r, args.qk, args.nj), defaults))
    if None in (r, qk, nj):
        raise UsageError("--r, --qk and --nj are required for models 1 and 2")
    jobs = args.jobs if args.jobs is not None else default_jobs()
    return McConfig(args.model, r, qk, nj, rho=rho, phi=args.phi, sigma=parse_sigma(args.sigma),
                    unit_variance=args.unit_variance, tests=tuple(_split(args.tests)),
                    reps=args.reps, alpha=args.alpha, seed=args.seed, jobs=jobs)


def _resolve_seed(args, err) -> None:
    if args.seed is None:
        args.seed = secrets.randbits(32)
        err.write(f"seed: {args.seed}\n")


def cmd_simulate(args, out, err) -> int:
    _resolve_seed(args, err)
    cfg = _mc_config(args, args.rho)
    out.write(rows_to_csv(run_mc(cfg)))
    return EXIT_OK


def cmd_power(args, out, err) -> int:
    _resolve_seed(args, err)
    grid = parse_grid(args.rho_grid)
    cfg = _mc_config(args, grid[0])
    out.write(rows_to_csv(power_curve(cfg, grid)))
    return EXIT_OK


def main(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        if args.command == "test":
            code = cmd_test(args, out)
        elif args.command == "simulate":
            code = cmd_simulate(args, out, err)
        else:
            code = cmd_power(args, out, err)
    except (UsageError, ConfigError) as exc:
        err.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (DataError, ValueError, OSError) as exc:
        err.write(f"data error: {exc}\n")
        return EXIT_DATA
    err.write(f"elapsed {time.perf_counter() - started:.2f}s\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
