"""Mean interior-point iterations per LMI solve along the Example-1 SSF delay path.

Usage: python3 scripts/iteration_table.py [--N 1 2 3] [--json]
"""
import argparse
import json

from delaysynth import config as cfgmod
from delaysynth.cli import Task, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = ap.parse_args()
    cfg = cfgmod.bundled("example1")
    report = run([Task(cfg, "ssf", N) for N in args.N])
    its = report.iterations()
    if args.json:
        print(json.dumps(its, indent=2))
        return report.exit_code
    print(f"{'N':>2} | {'h_max':>7} | {'#It.':>6} | {'solves':>6}")
    for r in its:
        print(f"{r['N']:>2} | {r['h_max']:7.3f} | {r['mean_iterations']:6.1f} | {r['solves']:>6}")
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
