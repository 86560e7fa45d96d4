"""Benchmark table for Example 1: reference gains and synthesized gains side by side.

Usage: python3 scripts/benchmark_table.py [--out DIR] [--jobs J]
"""
import argparse
import logging

from delaysynth.bessel_legendre import max_delay_analysis
from delaysynth.cli import reproduce_tasks, run
from delaysynth.fixtures import (EXAMPLE1_A, EXAMPLE1_REFERENCE_GAINS, EXAMPLE1_REFERENCE_HMAX,
                                 EXAMPLE1_REFERENCE_SPECTRAL, reference_delayed_matrix)
from delaysynth.oracle import spectral_max_delay


def reference_rows():
    rows = []
    for N in sorted(EXAMPLE1_REFERENCE_GAINS):
        A_d = reference_delayed_matrix(N)
        rows.append((N, max_delay_analysis(EXAMPLE1_A, A_d, N), EXAMPLE1_REFERENCE_HMAX[N],
                     spectral_max_delay(EXAMPLE1_A, A_d), EXAMPLE1_REFERENCE_SPECTRAL[N]))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="directory for report.json/csv and table.txt")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    print("Reference gains (hard-coded)")
    print(f"{'N':>2} | {'LMI':>7} {'(ref)':>7} | {'spectral':>8} {'(ref)':>7}")
    for N, h, h_ref, s, s_ref in reference_rows():
        print(f"{N:>2} | {h:7.3f} {h_ref:7.3f} | {s:8.3f} {s_ref:7.3f}")
    print()
    report = run(reproduce_tasks(["example1"]), args.jobs)
    if args.out:
        report.write(args.out)
    print(report.table())
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
