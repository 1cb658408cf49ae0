#!/usr/bin/env python3
"""Short DCTCP flow completion times next to two long background flows."""

import argparse
import os

from rpmsim.experiments import DEFAULT_SIZES, ExperimentConfig, run_fct, write_fct_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--scale", type=float, default=0.001)
    ap.add_argument("--sizes", type=int, nargs="+", default=list(DEFAULT_SIZES), help="flow sizes in MSS")
    ap.add_argument("--modes", nargs="+", default=["fwd", "rpm"])
    ap.add_argument("--jobs", type=int, default=os.cpu_count())
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)

    results = {}
    for mode in args.modes:
        exp = ExperimentConfig(
            experiment="fct", mode=mode, scale=args.scale, reps=args.reps, sizes=tuple(args.sizes), jobs=args.jobs
        )
        results[mode] = run_fct(exp)
        write_fct_csv(results[mode], os.path.join(args.outdir, f"fct-{mode}.csv"))

    print(f"{'size':>5} " + " ".join(f"{m + ' ms':>16}" for m in args.modes))
    for size in args.sizes:
        cells = []
        for mode in args.modes:
            r = results[mode].row(size)
            cells.append(f"{r.mean_fct_s * 1e3:8.2f}+-{r.sd * 1e3:6.2f}")
        print(f"{size:>5} " + " ".join(cells))


if __name__ == "__main__":
    main()
