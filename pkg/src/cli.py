"""
cli.py

Command-line entry point: python -m src <command> [options].

Exit codes: 0 success, 1 failed validation, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from src.config import RunConfig
from src.csv_report import CSVReport, write_table
from src.errors import ConfigError, DivergenceError
from src.experiment import COMMANDS, ExperimentRunner, ExperimentSpec
from src.json_report import JSONReport
from src.persistence import PersistenceManager
from src.results import Difference
from src.validation import validate

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
FORMATS = {"csv": CSVReport, "jsonl": JSONReport}
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# --quick trims simulation and grids to a smoke-test size
QUICK_JOBS, QUICK_REPS = 5_000, 10
QUICK_P_GRID = (0.0, 0.4, 0.8)
QUICK_BOUND = 30


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m src",
                                     description="Mean response times of parallel jobs under multicore scheduling policies.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output file (default: stdout summary only)")
    parser.add_argument("--format", choices=sorted(FORMATS), default="csv")
    parser.add_argument("--reps", type=int)
    parser.add_argument("--jobs-per-rep", type=int)
    parser.add_argument("--workers", type=int, default=1, help="worker processes/threads")
    parser.add_argument("--quick", action="store_true", help="small grids and short simulations")
    parser.add_argument("--golden", help="golden value table used by validate")
    parser.add_argument("--print-config", action="store_true", help="print every setting and exit")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def load_settings(args) -> RunConfig:
    settings = RunConfig.from_file(args.config) if args.config else RunConfig()
    return settings.with_overrides({"seed": args.seed, "reps": args.reps, "jobs_per_rep": args.jobs_per_rep})


def build_spec(args, settings: RunConfig) -> ExperimentSpec:
    """
    Raises:
        ConfigError: naming the offending key
    """
    quick = args.quick
    jobs = settings.get_int("jobs_per_rep")
    reps = settings.get_int("reps")
    p_grid = settings.p_grid()
    bound = settings.get_int("mdp.bound")
    if quick:
        jobs = jobs if args.jobs_per_rep else QUICK_JOBS
        reps = reps if args.reps else QUICK_REPS
        p_grid = p_grid if settings.explicit("p.grid") else QUICK_P_GRID
        bound = bound if settings.explicit("mdp.bound") else QUICK_BOUND
    try:
        return ExperimentSpec(
            command=args.command,
            config=settings.system_config(args.command),
            policies=settings.policies(),
            widths=settings.widths(),
            rho_grid=settings.rho_grid(),
            p_grid=p_grid,
            seed=settings.get_int("seed"),
            reps=reps,
            jobs_per_rep=jobs,
            simulate=settings.get_bool("simulate"),
            mrc=settings.mrc(),
            mdp_bound=bound,
            mdp_refine=settings.get_int("mdp.refine"),
            workers=args.workers,
            quick=quick,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        key, _, message = str(exc).partition(": ")
        raise ConfigError(key if message else "config", message or str(exc)) from exc


def _sibling(path: str, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


def run(spec: ExperimentSpec, args) -> int:
    runner = ExperimentRunner(FORMATS[args.format])
    if spec.command == "validate":
        report = validate(spec.seed, spec.quick, args.golden)
        for line in report.lines():
            print(line)
        print("validation " + ("passed" if report.passed else f"FAILED ({len(report.failures)} checks)"))
        return EXIT_OK if report.passed else EXIT_FAILED

    if spec.command == "analyze":
        rows = runner.analyze(spec)
    elif spec.command == "simulate":
        rows = runner.simulate(spec)
    elif spec.command == "sweep":
        rows = runner.sweep_rho(spec)
    elif spec.command == "mdp":
        rows, table = runner.mdp_point(spec)
        if args.out:
            PersistenceManager.save_policy_table(table, _sibling(args.out, ".policy.csv"))
    else:
        heatmap = runner.heatmap(spec)
        rows = heatmap.rows
        if args.out:
            write_table(heatmap.differences, Difference._fields, _sibling(args.out, ".diff.csv"))
        for total, points, ordered in heatmap.diagonal_trend:
            logger.info("p1+p2=%.3g: OPT %s along %d points", total,
                        "non-increasing" if ordered else "NOT monotone", points)

    report = runner.build_report(rows)
    if args.out:
        report.export(args.out)
    print(report.summary())
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        settings = load_settings(args)
        if args.print_config:
            print(settings.render(), end="")
            return EXIT_OK
        spec = build_spec(args, settings)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(spec, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        logger.error("value iteration did not converge; last spans %s", exc.span_trace[-3:])
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
