#!/usr/bin/env python3
"""Run the three benchmark suites end to end and summarize the orderings.

Each suite is a config under configs/; reports and an aggregate.csv land in
out/<suite>/. The summary lines at the end print per-strategy means of final
test accuracy, and for the redundant pool the fraction of selected samples
that were jittered copies.
"""

import argparse
import os
import sys

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "src"))

from dacs.cli import run_config_grid
from dacs.config import parse_run_config

SUITES = ("mixture", "near_duplicate", "ablation")


def _mean_over(reports, field):
    vals = [
        np.mean([getattr(r, field) for r in rep.records if getattr(r, field) is not None])
        for rep in reports
    ]
    return float(np.mean(vals))


def summarize(suite, reports):
    by_strategy = {}
    for rep in reports:
        by_strategy.setdefault(rep.strategy, []).append(rep)
    print(f"\n[{suite}]")
    ranked = sorted(
        by_strategy.items(),
        key=lambda kv: -np.mean([r.final_accuracy for r in kv[1]]),
    )
    for strategy, reps in ranked:
        acc = np.mean([r.final_accuracy for r in reps])
        line = f"  {strategy:<14} final_acc={acc:.4f}"
        if any(r.near_duplicate_fraction is not None for r in reps[0].records):
            line += f"  dup_frac={_mean_over(reps, 'near_duplicate_fraction'):.4f}"
        if suite != "ablation":
            line += (
                f"  diversity={_mean_over(reps, 'diversity'):.4f}"
                f"  informativeness={_mean_over(reps, 'informativeness'):.4f}"
            )
        print(line)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--suite", choices=SUITES + ("all",), default="all")
    parser.add_argument("--out", default=os.path.join(HERE, "..", "out"))
    args = parser.parse_args()

    chosen = SUITES if args.suite == "all" else (args.suite,)
    status = 0
    for suite in chosen:
        config = parse_run_config(os.path.join(HERE, "..", "configs", f"{suite}.cfg"))
        out_dir = os.path.join(args.out, suite)
        reports, diverged = run_config_grid(config, out_dir)
        for strategy, seed, msg in diverged:
            print(f"diverged: {suite}/{strategy} seed {seed}: {msg}", file=sys.stderr)
            status = 1
        summarize(suite, reports)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
