"""Command line entry point: ``rpmsim simulate | stability | experiment``.

Exit status is 0 on success, 1 for bad arguments or configuration, 2 when a
run fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import __version__

log = logging.getLogger("rpmsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parser():
    p = _Parser(prog="rpmsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one scenario file (JSON or YAML)")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="per-flow CSV")
    s.add_argument("--events", help="optional CSV of signal/mark/drop events")
    s.add_argument("--until-ms", type=float, help="override the configured horizon")

    st = sub.add_parser("stability", help="marking-gain recipe and root scan for the fluid model")
    st.add_argument("--c", type=float, required=True, help="bottleneck capacity, packets/s")
    st.add_argument("--d", type=float, required=True, help="round-trip delay, s")
    st.add_argument("--ds", type=float, help="short (sender-switch) loop delay, s")
    st.add_argument("--sweep", choices=["ds"], help="sweep d_s over [0.1 d, 0.9 d]")
    st.add_argument("--points", type=int, default=9, help="sweep samples")
    st.add_argument("--a", type=float, default=1.0)
    st.add_argument("--b", type=float, default=0.5)
    st.add_argument("--s-factor", type=float, default=1.05)
    st.add_argument("--eta-scale", type=float, default=1.0)
    st.add_argument("--out", required=True)

    e = sub.add_parser("experiment", help="fairness, fct or reaction study")
    e.add_argument("kind", choices=["fairness", "fct", "reaction"])
    e.add_argument("--mode", default="rpm", help="fwd | rpm | rpm-port")
    e.add_argument("--scale", type=float, default=0.001)
    e.add_argument("--reps", type=int, default=1)
    e.add_argument("--seed", type=int, default=1, help="first seed; repetitions use consecutive seeds")
    e.add_argument("--row", type=int, choices=[1, 2, 3], default=2, help="receiver-delay row (fairness, reaction)")
    e.add_argument("--duration", type=float, help="simulated seconds per run")
    e.add_argument("--buffer-ms", type=float, default=30.0, help="switch buffer as drain time; 0 = 2 ms default")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out", required=True)
    return p


def _cmd_simulate(args):
    from .sim.config import load_config
    from .sim.network import build_topology
    from .sim.trace import write_events_csv, write_flow_csv
    from .units import MS

    cfg = load_config(args.config)
    until = None if args.until_ms is None else int(args.until_ms * MS)
    trace = build_topology(cfg).run(until)
    write_flow_csv(trace, args.out)
    if args.events:
        write_events_csv(trace, args.events)
    log.info("%d flows, %d events dispatched", len(trace.flows), trace.dispatched)


def _cmd_stability(args):
    from .stability import REPORT_COLUMNS, stability_report

    if args.sweep == "ds":
        if args.points < 1:
            raise UsageError("--points must be >= 1")
        ds_values = np.linspace(0.1 * args.d, 0.9 * args.d, args.points)
    elif args.ds is None:
        raise UsageError("stability: --ds is required unless --sweep ds is given")
    else:
        ds_values = [args.ds]
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for ds in ds_values:
            rep = stability_report(
                args.c, args.d, float(ds), a=args.a, b=args.b, s_factor=args.s_factor, eta_scale=args.eta_scale
            )
            w.writerow(rep.row())


def _cmd_experiment(args):
    from .experiments import (
        ExperimentConfig,
        run_fairness,
        run_fct,
        run_reaction,
        write_fairness_csv,
        write_fct_csv,
        write_reaction_csv,
    )

    name = {"fairness": f"fairness-{args.row}", "fct": "fct", "reaction": "reaction"}[args.kind]
    try:
        exp = ExperimentConfig(
            experiment=name,
            mode=args.mode,
            scale=args.scale,
            reps=args.reps,
            seeds=tuple(range(args.seed, args.seed + max(args.reps, 0))),
            duration_s=args.duration,
            buffer_ms=args.buffer_ms or None,
            row=args.row,
            jobs=args.jobs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.kind == "fairness":
        write_fairness_csv(run_fairness(exp), args.out)
    elif args.kind == "fct":
        write_fct_csv(run_fct(exp), args.out)
    else:
        write_reaction_csv(run_reaction(exp), args.out)


def main(argv=None):
    from .sim.config import ConfigError

    parser = _parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if args.command is None:
            raise UsageError("missing subcommand")
        handler = {"simulate": _cmd_simulate, "stability": _cmd_stability, "experiment": _cmd_experiment}[args.command]
        handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"rpmsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure inside a run maps to one exit code
        log.debug("run failed", exc_info=True)
        print(f"rpmsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
