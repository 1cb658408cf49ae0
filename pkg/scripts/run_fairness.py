#!/usr/bin/env python3
"""Jain's index for the three receiver-delay rows under forward and reverse-path marking."""

import argparse
import os

from rpmsim.experiments import ExperimentConfig, run_fairness, write_fairness_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--scale", type=float, default=0.001)
    ap.add_argument("--rows", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--modes", nargs="+", default=["fwd", "rpm", "rpm-port"])
    ap.add_argument("--jobs", type=int, default=os.cpu_count())
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)

    print(f"{'row':>3} {'mode':>8} {'J mean':>8} {'J sd':>7}")
    for row in args.rows:
        for mode in args.modes:
            exp = ExperimentConfig(
                experiment=f"fairness-{row}", mode=mode, scale=args.scale, reps=args.reps, row=row, jobs=args.jobs
            )
            res = run_fairness(exp)
            write_fairness_csv(res, os.path.join(args.outdir, f"fairness-{row}-{mode}.csv"))
            m, sd = res.jain_mean_sd
            print(f"{row:>3} {mode:>8} {m:8.4f} {sd:7.4f}")


if __name__ == "__main__":
    main()
