#!/usr/bin/env python3
"""Run the whole benchmark corpus and print the optimization summary table.

For each kernel this reports the auxiliary arrays found, the detection
iterations, the static per-iteration operation counts before and after the
transformation, and the outcome of the interpreter equivalence check.

Usage:
    python scripts/run_benchmarks.py [--level N] [--strategy S] [--trials T]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from loopcse.pipeline import Config, run_pipeline  # noqa: E402

BENCH_DIR = Path(__file__).resolve().parent.parent / "benchmarks"
KERNELS = ["pop", "psinv", "resid", "poisson", "j3d27pt", "gaussian"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--level", type=int, default=3, choices=(0, 1, 2, 3))
    ap.add_argument("--strategy", default="heuristic", choices=("exact", "heuristic", "auto"))
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    tol = 0.0 if args.level == 0 else 1e-10
    header = f"{'kernel':10s} {'aux':>4s} {'iter':>4s}  {'static ops (before -> after)':40s} {'check':>10s} {'time':>7s}"
    print(header)
    print("-" * len(header))
    for name in KERNELS:
        text = (BENCH_DIR / f"{name}.loop").read_text()
        cfg = Config(
            reassoc=args.level,
            strategy=args.strategy,
            check=(args.trials, tol),
            seed=args.seed,
        )
        t0 = time.time()
        out = run_pipeline(text, cfg)
        elapsed = time.time() - t0
        r = out.report
        ops = ", ".join(
            f"{k} {b}->{a}" for k, (b, a) in r["staticOps"].items() if b or a
        )
        status = "pass" if out.check_report["ok"] else "FAIL"
        if tol:
            status += f" ({out.check_report['maxRelError']:.1e})"
        print(
            f"{name:10s} {len(r['aux']):4d} {r['iterations']:4d}  {ops:40s} {status:>10s} {elapsed:6.2f}s"
        )


if __name__ == "__main__":
    main()
