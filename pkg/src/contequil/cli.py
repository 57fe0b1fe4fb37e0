"""Command-line front end.

Exit codes: 0 when every inequality passes, 2 when any is violated, 1 on a
configuration or runtime error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .report import to_csv
from .scenario import BUNDLED, ConfigError, SweepReport, apply_overrides, load_config, parse_axis, run_scenario, run_sweep

JOBS_ENV = "CONTEQUIL_JOBS"
EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--tolerance", type=float, default=None, help="override the pass tolerance")
    common.add_argument("--jobs", type=int, default=None, help=f"parallel workers (default ${JOBS_ENV} or 1)")
    common.add_argument("--out", type=Path, default=None, help="write CSV here instead of stdout")

    parser = argparse.ArgumentParser(prog="contequil", description="Finite-time equilibration bounds and their oracle checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="run the full inequality suite for one config")
    p.add_argument("config", help="config path or bundled name: " + ", ".join(BUNDLED))

    p = sub.add_parser("sweep", parents=[common], help="Cartesian-product parameter sweep")
    p.add_argument("config")
    p.add_argument("--axis", action="append", default=[], help="dotted.field=v1,v2 (T is a shortcut for the time list)")

    p = sub.add_parser("report", parents=[common], help="run several configs into one CSV")
    p.add_argument("configs", nargs="*", default=list(BUNDLED), help="defaults to every bundled config")
    return parser


def _emit(report: SweepReport, out: Path | None) -> None:
    text = to_csv(report)
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    try:
        if args.command == "report":
            rows = []
            for name in args.configs:
                cfg = apply_overrides(load_config(name), args.seed, args.tolerance)
                rows += run_scenario(cfg, jobs).rows
            report = SweepReport(rows)
        else:
            cfg = apply_overrides(load_config(args.config), args.seed, args.tolerance)
            if args.command == "verify":
                report = run_scenario(cfg, jobs)
            else:
                report = run_sweep(cfg, [parse_axis(a) for a in args.axis], jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _emit(report, args.out)
    return EXIT_OK if report.all_pass else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
