#!/usr/bin/env python3
"""Run every registered experiment and summarize the acceptance results.

Usage:
    python scripts/run_all_experiments.py [--out reports] [--seed 0]

Writes one CSV + JSON pair per experiment into the output directory and exits
nonzero if any acceptance rule fails.
"""

import argparse
import sys
import time

from koopman_approx.experiments import EXPERIMENTS, ExperimentConfig, run


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="reports")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    failures = 0
    for name in sorted(EXPERIMENTS):
        cfg = ExperimentConfig(experiment=name, seed=args.seed, out=args.out)
        t0 = time.time()
        report = run(cfg)
        status = "PASS" if report.passed else "FAIL"
        if not report.passed:
            failures += 1
        print(f"{name:28s} {status}  ({time.time() - t0:6.1f} s)")
    print(f"\n{len(EXPERIMENTS) - failures}/{len(EXPERIMENTS)} experiments passed; "
          f"reports in {args.out}/")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
