#!/usr/bin/env python3
"""Plot corrmon CSV output.

Usage:
    python3 docs/plot_results.py out/run/steps_mwa.csv [more steps files ...]
    python3 docs/plot_results.py out/sweep/sweep.csv

Step files plot total expected error against time with the per-step bound
band; a sweep file plots normalized error per policy against the swept axis
(rho when present, otherwise m). Pass --out to save instead of showing.
"""

import argparse
import csv
import sys

import matplotlib.pyplot as plt


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def plot_steps(ax, paths):
    for path in paths:
        rows = read_rows(path)
        t = [int(r["t"]) for r in rows]
        ax.plot(t, [float(r["total_err"]) for r in rows], label=rows[0]["policy"])
    # Bounds are policy-independent; take them from the last file read.
    if rows[0]["lb"]:
        ax.plot(t, [float(r["lb"]) for r in rows], "k--", lw=0.8, label="lb")
    ax.plot(t, [float(r["ub"]) for r in rows], "k:", lw=0.8, label="ub")
    ax.set_xlabel("slot")
    ax.set_ylabel("total expected error")


def plot_sweep(ax, path):
    rows = [r for r in read_rows(path) if r["status"] == "ok"]
    rhos = {r["rho"] for r in rows}
    axis = "rho" if len(rhos) > 1 else "m"
    for policy in dict.fromkeys(r["policy"] for r in rows):
        mine = [r for r in rows if r["policy"] == policy]
        x = [float(r[axis]) for r in mine]
        ax.plot(x, [float(r["avg_norm_err"]) for r in mine], "o-", label=policy)
    first = {r[axis]: r for r in reversed(rows)}
    x = sorted(float(k) for k in first)
    if all(first[k]["lb_norm"] for k in first):
        ax.plot(x, [float(first[k]["lb_norm"]) for k in sorted(first)], "k--", lw=0.8, label="lb / m")
    if all(first[k]["ub_norm"] for k in first):
        ax.plot(x, [float(first[k]["ub_norm"]) for k in sorted(first)], "k:", lw=0.8, label="ub / m")
    ax.set_xlabel(axis)
    ax.set_ylabel("normalized error")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv", nargs="+", help="steps_*.csv files or one sweep.csv")
    parser.add_argument("--out", help="write the figure here instead of showing it")
    args = parser.parse_args()

    fig, ax = plt.subplots(figsize=(7, 4.5))
    with open(args.csv[0], newline="") as f:
        header = f.readline()
    if header.startswith("t,"):
        plot_steps(ax, args.csv)
    elif header.startswith("scenario,"):
        if len(args.csv) != 1:
            sys.exit("pass exactly one sweep.csv")
        plot_sweep(ax, args.csv[0])
    else:
        sys.exit(f"unrecognized header in {args.csv[0]}")
    ax.legend()
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
