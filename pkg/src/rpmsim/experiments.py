"""Fairness, flow-completion-time and reaction-time experiments on the dumbbell.

Every runner takes an :class:`ExperimentConfig`, executes one simulation per
seed and aggregates in seed order, so results do not depend on whether the
repetitions ran in a worker pool.
"""

from __future__ import annotations

import csv
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .endpoints import FlowSpec, Transport
from .metrics import jain_index, mean_sd, measure_reaction_time, summarize_reactions
from .sim.config import AqmMode
from .sim.network import build_topology
from .sim.scenarios import GBPS, N_PAIRS, fairness_scenario, fct_scenario
from .units import MS, S

__all__ = [
    "EXPERIMENTS",
    "DEFAULT_SIZES",
    "ExperimentConfig",
    "FairnessResult",
    "FctResult",
    "ReactionResult",
    "run_fairness",
    "run_fct",
    "run_reaction",
    "write_fairness_csv",
    "write_fct_csv",
    "write_reaction_csv",
]

EXPERIMENTS = ("fairness-1", "fairness-2", "fairness-3", "fct", "reaction")
DEFAULT_SIZES = (2, 8, 32, 128, 512)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment under one marking mode.

    ``buffer_ms`` sizes the switch buffers as a drain time at the bottleneck
    rate; ``None`` falls back to the scenario default (just under 2 ms).
    ``row`` picks the receiver-delay row used by ``reaction``.
    """

    experiment: str = "fairness-2"
    mode: AqmMode = AqmMode.RPM_PER_FLOW
    scale: float = 0.001
    reps: int = 10
    seeds: tuple | None = None
    duration_s: float | None = None
    warmup_frac: float = 0.25
    buffer_ms: float | None = 30.0
    start_jitter_ms: float = 100.0
    transport: Transport = Transport.TCP
    row: int = 2
    sizes: tuple = DEFAULT_SIZES
    flows_per_size: int = 10
    fct_gap_ms: float = 250.0
    fct_warmup_s: float = 1.0
    fct_tail_s: float = 8.0
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        object.__setattr__(self, "mode", AqmMode.parse(self.mode))
        if self.mode == AqmMode.NONE:
            raise ValueError("experiments compare marking modes; 'none' is not one")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not 0 <= self.warmup_frac < 1:
            raise ValueError("warmup_frac must be in [0, 1)")
        if self.seeds is not None and len(self.seeds) != self.reps:
            raise ValueError("need exactly one seed per repetition")
        if any(s < 1 for s in self.sizes) or self.flows_per_size < 1:
            raise ValueError("flow sizes and counts must be positive")

    @property
    def seed_list(self):
        return tuple(self.seeds) if self.seeds is not None else tuple(range(1, self.reps + 1))

    @property
    def table_row(self):
        if self.experiment.startswith("fairness-"):
            return int(self.experiment[-1])
        return self.row

    def with_mode(self, mode):
        return replace(self, mode=AqmMode.parse(mode))

    def horizon(self):
        if self.experiment == "fct":
            if self.duration_s is not None:
                return int(self.duration_s * S)
            n = len(self.sizes) * self.flows_per_size
            return int((self.fct_warmup_s + n * self.fct_gap_ms / 1000 + self.fct_tail_s) * S)
        return int((30.0 if self.duration_s is None else self.duration_s) * S)

    def buffer_bytes(self, bottleneck_bps):
        if self.buffer_ms is None:
            return None
        return max(int(bottleneck_bps * self.buffer_ms / 8000), 1500)


def _map(fn, args, jobs):
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, args))
    return [fn(a) for a in args]


# -- fairness --------------------------------------------------------------


def _long_flow_config(exp: ExperimentConfig, seed):
    bottleneck = int(10 * GBPS * exp.scale)
    return fairness_scenario(
        exp.table_row,
        exp.mode,
        scale=exp.scale,
        duration=exp.horizon(),
        seed=seed,
        transport=exp.transport,
        buffer_limit=exp.buffer_bytes(bottleneck),
        start_jitter=int(exp.start_jitter_ms * MS),
    )


@dataclass(frozen=True)
class FairnessRep:
    seed: int
    throughput: tuple  # bit/s per flow after warm-up
    jain: float
    reactions: tuple  # Reaction records for signals after warm-up


def _fairness_rep(args):
    exp, seed = args
    cfg = _long_flow_config(exp, seed)
    trace = build_topology(cfg).run()
    t1 = trace.duration
    t0 = int(t1 * exp.warmup_frac)
    thr = tuple(trace.throughput(i, t0, t1) for i in range(len(trace.flows)))
    reactions = tuple(r for r in measure_reaction_time(trace) if r.signal_t >= t0)
    return FairnessRep(seed, thr, jain_index(thr), reactions)


@dataclass(frozen=True)
class FairnessResult:
    config: ExperimentConfig
    reps: tuple

    @property
    def jain_values(self):
        return [r.jain for r in self.reps]

    @property
    def jain_mean_sd(self):
        return mean_sd(self.jain_values)

    def mean_throughput(self):
        n = len(self.reps[0].throughput)
        return [mean_sd(r.throughput[i] for r in self.reps)[0] for i in range(n)]


def run_fairness(exp: ExperimentConfig) -> FairnessResult:
    """Ten long flows H_i -> H_{i+10}; per-flow goodput after the warm-up cut and Jain's index."""
    if not exp.experiment.startswith("fairness-") and exp.experiment != "reaction":
        raise ValueError(f"{exp.experiment} is not a long-flow experiment")
    reps = _map(_fairness_rep, [(exp, s) for s in exp.seed_list], exp.jobs)
    return FairnessResult(exp, tuple(sorted(reps, key=lambda r: r.seed)))


def write_fairness_csv(result: FairnessResult, path):
    exp = result.config
    jm, jsd = result.jain_mean_sd
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("exp", "mode", "flow", "thr_bps"))
        for i, thr in enumerate(result.mean_throughput()):
            w.writerow((exp.experiment, exp.mode.value, i, f"{thr:.3f}"))
        w.writerow((exp.experiment, exp.mode.value, "J", f"{jm:.6f}"))
        w.writerow((exp.experiment, exp.mode.value, "J_sd", f"{jsd:.6f}"))


# -- reaction time ---------------------------------------------------------


@dataclass(frozen=True)
class ReactionResult:
    config: ExperimentConfig
    reactions: tuple  # (seed, Reaction)

    def per_flow(self):
        return summarize_reactions([r for _, r in self.reactions])


def run_reaction(exp: ExperimentConfig, fairness: FairnessResult | None = None) -> ReactionResult:
    """Signal-to-CWR delays for the long flows of one receiver-delay row.

    Pass an existing ``fairness`` result for the same row and mode to reuse
    its traces instead of simulating again.
    """
    if fairness is None:
        fairness = run_fairness(exp)
    out = tuple((rep.seed, r) for rep in fairness.reps for r in rep.reactions)
    return ReactionResult(fairness.config, out)


def write_reaction_csv(result: ReactionResult, path):
    mode = result.config.mode.value
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("mode", "seed", "flow", "signal_t", "reaction_s"))
        for seed, r in result.reactions:
            w.writerow((mode, seed, r.flow, f"{r.signal_t / S:.9f}", "" if r.censored else f"{r.seconds:.9f}"))


# -- flow completion time --------------------------------------------------

BACKGROUND = (("H1", "H11"), ("H2", "H12"))
SHORT_SRC = tuple(f"H{i}" for i in range(3, N_PAIRS + 1))
SHORT_DST = tuple(f"H{i}" for i in range(N_PAIRS + 3, 2 * N_PAIRS + 1))


def fct_flows(exp: ExperimentConfig, seed):
    """Two long DCTCP background flows plus ``flows_per_size`` short DCTCP flows per size class.

    Short flows start one every ``fct_gap_ms`` after the warm-up, in a
    seed-dependent order, round-robin over the remaining host pairs.
    """
    rng = random.Random(seed)
    flows = [FlowSpec(s, d, None, 0, Transport.DCTCP) for s, d in BACKGROUND]
    order = [size for size in exp.sizes for _ in range(exp.flows_per_size)]
    rng.shuffle(order)
    t = int(exp.fct_warmup_s * S)
    gap = int(exp.fct_gap_ms * MS)
    for k, size in enumerate(order):
        j = k % len(SHORT_SRC)
        start = t + k * gap + rng.randrange(gap // 2 + 1)
        flows.append(FlowSpec(SHORT_SRC[j], SHORT_DST[j], size, start, Transport.DCTCP))
    return flows


def _fct_rep(args):
    exp, seed = args
    cfg = fct_scenario(
        exp.mode,
        scale=exp.scale,
        duration=exp.horizon(),
        seed=seed,
        buffer_limit=exp.buffer_bytes(int(10 * GBPS * exp.scale)),
    )
    cfg.flows = fct_flows(exp, seed)
    trace = build_topology(cfg).run()
    per_size = {}
    for rec in trace.flows[len(BACKGROUND):]:
        per_size.setdefault(rec.size_mss, []).append(rec.fct)
    return seed, per_size


@dataclass(frozen=True)
class FctRow:
    size_mss: int
    mode: str
    mean_fct_s: float
    sd: float
    n: int
    censored: int
    rep_means: tuple


@dataclass(frozen=True)
class FctResult:
    config: ExperimentConfig
    rows: tuple

    def row(self, size):
        for r in self.rows:
            if r.size_mss == size:
                return r
        raise KeyError(size)


def run_fct(exp: ExperimentConfig) -> FctResult:
    """Mean FCT per size class; ``sd`` is the spread of the per-repetition means.

    Flows unfinished at the horizon count as censored and are left out of the means.
    """
    reps = sorted(_map(_fct_rep, [(exp, s) for s in exp.seed_list], exp.jobs), key=lambda r: r[0])
    rows = []
    for size in exp.sizes:
        rep_means = []
        n = censored = 0
        for _, per_size in reps:
            done = [f for f in per_size.get(size, []) if f is not None]
            censored += len(per_size.get(size, [])) - len(done)
            n += len(done)
            if done:
                rep_means.append(math.fsum(done) / len(done))
        m, sd = mean_sd(rep_means)
        rows.append(FctRow(size, exp.mode.value, m, sd, n, censored, tuple(rep_means)))
    return FctResult(exp, tuple(rows))


def write_fct_csv(result: FctResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("size_mss", "mode", "mean_fct_s", "sd", "n", "censored"))
        for r in result.rows:
            w.writerow((r.size_mss, r.mode, f"{r.mean_fct_s:.9f}", f"{r.sd:.9f}", r.n, r.censored))
