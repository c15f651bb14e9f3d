"""Run every oracle battery and print a one-line summary per suite.

Usage: python scripts/oracle_batteries.py [seed]
"""
import sys

from quadenv.suites import SUITES, run_suite


def main(seed=0):
    failed = 0
    for name in sorted(SUITES):
        checks = run_suite(name, None, int(seed))
        ok = all(c.passed for c in checks.values())
        failed += not ok
        worst = max((c.max_deviation for c in checks.values()), default=0.0)
        print(f"{name:12s} {'PASS' if ok else 'FAIL'}  checks={len(checks)}  "
              f"max_deviation={worst:.3e}")
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main(*sys.argv[1:])
