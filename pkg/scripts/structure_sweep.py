"""Maximal delay of unstructured, Jordan-structured SSF and SOF synthesis on Example 1.

Writes one CSV row per (method, N); ``--plot FILE`` also draws a bar chart.
Usage: python3 scripts/structure_sweep.py [--N 1 2 3] [--csv FILE] [--plot FILE]
"""
import argparse
import csv
import sys

from delaysynth.errors import DelaySynthError
from delaysynth.fixtures import EXAMPLE1_K0, example1
from delaysynth.synthesis import path_follow

VARIANTS = (("full", "ssf", "full"), ("ssf", "ssf", "jordan"), ("sof", "sof", "jordan"))


def sweep(Ns, h_cap):
    rows = []
    for label, mode, method in VARIANTS:
        for N in Ns:
            try:
                res = path_follow(example1(), N, K0=EXAMPLE1_K0, mode=mode, method=method, h_cap=h_cap)
                rows.append({"variant": label, "N": N, "h_max": res.h_achieved,
                             "abscissa": res.abscissa, "solves": res.solves})
            except DelaySynthError as exc:
                rows.append({"variant": label, "N": N, "h_max": float("nan"),
                             "abscissa": float("nan"), "solves": 0, "error": str(exc)})
            print(f"{label:>5} N={N}: h_max={rows[-1]['h_max']:.4f}", file=sys.stderr)
    return rows


def write_csv(rows, fh):
    w = csv.DictWriter(fh, fieldnames=["variant", "N", "h_max", "abscissa", "solves", "error"],
                       lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def plot(rows, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    Ns = sorted({r["N"] for r in rows})
    width = 0.8 / len(VARIANTS)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k, (label, _, _) in enumerate(VARIANTS):
        hs = [next(r["h_max"] for r in rows if r["variant"] == label and r["N"] == N) for N in Ns]
        ax.bar([N + (k - 1) * width for N in Ns], hs, width, label=label)
    ax.set_xticks(Ns)
    ax.set_xlabel("N")
    ax.set_ylabel("maximal delay")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--h-cap", type=float, default=100.0)
    ap.add_argument("--csv", default="-", help="output CSV (default stdout)")
    ap.add_argument("--plot", default=None, help="image file for the bar chart (needs matplotlib)")
    args = ap.parse_args()
    rows = sweep(args.N, args.h_cap)
    if args.csv == "-":
        write_csv(rows, sys.stdout)
    else:
        with open(args.csv, "w", newline="") as fh:
            write_csv(rows, fh)
    if args.plot:
        plot(rows, args.plot)


if __name__ == "__main__":
    main()
