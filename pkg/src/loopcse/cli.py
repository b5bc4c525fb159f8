"""Command-line entry point.

Exit status: 0 on success, 1 on input diagnostics or configuration errors,
2 when the requested equivalence check fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import frontend
from .frontend import ParseError
from .nary_detect import BudgetExceeded
from .pipeline import Config, report_json, report_text, run_pipeline


def build_parser():
    ap = argparse.ArgumentParser(
        prog="loopcse",
        description="Eliminate redundant array computations across loop-nest iterations.",
    )
    ap.add_argument("input", help="source file (mini loop-nest language)")
    ap.add_argument("--reassoc", type=int, default=3, choices=(0, 1, 2, 3),
                    help="reassociation level: 0 binary only .. 3 distribute scalars")
    ap.add_argument("--strategy", default="auto", choices=("exact", "heuristic", "auto"),
                    help="extraction-set selection on the conflict graph")
    ap.add_argument("--mis-budget", type=int, default=40,
                    help="max class-augmented graph size for exact selection")
    ap.add_argument("--no-contract", action="store_true", help="skip array contraction")
    ap.add_argument("--normalize-subdiv", action="store_true",
                    help="normalize subtraction/division chains (levels >= 1)")
    ap.add_argument("--check", metavar="TRIALS,TOL",
                    help="verify against the interpreter oracle, e.g. 100,0 or 50,1e-10")
    ap.add_argument("--seed", type=int, default=0, help="oracle PRNG seed")
    ap.add_argument("--size", action="append", default=[], metavar="NAME=VALUE",
                    help="bind a symbolic extent (repeatable)")
    ap.add_argument("--report", default="text", choices=("text", "json"),
                    help="report format printed to stdout")
    return ap


def parse_args(argv):
    args = build_parser().parse_args(argv)
    check = None
    if args.check:
        try:
            trials, tol = args.check.split(",")
            check = (int(trials), float(tol))
        except ValueError:
            raise SystemExit("--check expects TRIALS,TOL (e.g. 100,0)")
    sizes = {}
    for item in args.size:
        try:
            name, value = item.split("=")
            sizes[name] = int(value)
        except ValueError:
            raise SystemExit(f"bad --size {item!r}, expected NAME=VALUE")
    cfg = Config(
        reassoc=args.reassoc,
        strategy=args.strategy,
        mis_budget=args.mis_budget,
        contract=not args.no_contract,
        normalize_subdiv=args.normalize_subdiv,
        check=check,
        seed=args.seed,
        sizes=sizes,
        report_format=args.report,
    )
    return args.input, cfg


def main(argv=None):
    path, cfg = parse_args(sys.argv[1:] if argv is None else argv)
    src = Path(path)
    try:
        text = src.read_text()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        out = run_pipeline(text, cfg)
    except (ParseError, BudgetExceeded, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    transformed = src.with_suffix(".race" + src.suffix)
    transformed.write_text(frontend.emit(out.transformed))
    src.with_suffix(".report.json").write_text(report_json(out.report))
    src.with_suffix(".report.txt").write_text(report_text(out.report))
    sys.stdout.write(
        report_json(out.report) if cfg.report_format == "json" else report_text(out.report)
    )
    if out.check_report is not None and not out.check_report["ok"]:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
