#!/usr/bin/env python3
"""Per-flow delay from an AQM signal to the sender's CWR segment reaching the switch."""

import argparse
import os

from rpmsim.experiments import ExperimentConfig, run_reaction, write_reaction_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--scale", type=float, default=0.001)
    ap.add_argument("--row", type=int, default=2, choices=[1, 2, 3])
    ap.add_argument("--modes", nargs="+", default=["fwd", "rpm"])
    ap.add_argument("--jobs", type=int, default=os.cpu_count())
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)

    summaries = {}
    for mode in args.modes:
        exp = ExperimentConfig(
            experiment="reaction", mode=mode, scale=args.scale, reps=args.reps, row=args.row, jobs=args.jobs
        )
        res = run_reaction(exp)
        write_reaction_csv(res, os.path.join(args.outdir, f"reaction-row{args.row}-{mode}.csv"))
        summaries[mode] = res.per_flow()

    print(f"{'flow':>4} " + " ".join(f"{m + ' median ms':>16} {'n':>5}" for m in args.modes))
    for f in sorted(summaries[args.modes[0]]):
        cells = []
        for m in args.modes:
            s = summaries[m].get(f)
            cells.append(f"{s.median_s * 1e3:16.2f} {s.n:5d}" if s else f"{'-':>16} {0:5d}")
        print(f"{f:>4} " + " ".join(cells))


if __name__ == "__main__":
    main()
