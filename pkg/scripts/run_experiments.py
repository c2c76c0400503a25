"""Run experiment suites and print their check lines.

    python3 scripts/run_experiments.py [suite ...] [--fast] [--seed N] [--jobs N]
"""
import argparse
import sys

from floodings.experiments import run_suite, suites


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("suites", nargs="*", default=["all"], help="names from: " + ", ".join(suites()))
    parser.add_argument("--fast", action="store_true")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()
    ok = True
    for name in args.suites:
        for report in run_suite(name, fast=args.fast, seed=args.seed, jobs=args.jobs):
            print(report.text())
            print()
            ok &= report.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
