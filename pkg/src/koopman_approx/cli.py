"""Command-line harness.

    koopman-approx run <config.json> [--seed N] [--trials N] [--out DIR]
    koopman-approx list
    koopman-approx check <report.json>

Exit codes: 0 all acceptance rules pass, 1 failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koopman-approx",
        description="Convergence experiments for transfer-operator approximation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("config", help="path to the config file")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--trials", type=int, default=None, help="override trials")
    p_run.add_argument("--out", default=None, help="override the output directory")

    sub.add_parser("list", help="list the registered experiments")

    p_check = sub.add_parser("check", help="re-evaluate a report's acceptance flag")
    p_check.add_argument("report", help="path to a JSON report")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list":
        for name in sorted(EXPERIMENTS):
            print(name)
        return 0
    if args.command == "run":
        try:
            cfg = ExperimentConfig.from_json(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.trials is not None:
                cfg.trials = args.trials
            if args.out is not None:
                cfg.out = args.out
        except (OSError, json.JSONDecodeError, ConfigError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        try:
            report = run(cfg)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        status = "PASS" if report.passed else "FAIL"
        print(f"{report.experiment}: {status}  ({report.acceptance['rule']})")
        if cfg.out:
            print(f"wrote {cfg.out}/{report.experiment}.csv and .json")
        return 0 if report.passed else 1
    if args.command == "check":
        try:
            with open(args.report, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            acceptance = payload["acceptance"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"report error: {exc}", file=sys.stderr)
            return 2
        passed = bool(acceptance.get("passed", False))
        print(f"{payload.get('experiment', '?')}: {'PASS' if passed else 'FAIL'}")
        return 0 if passed else 1
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
