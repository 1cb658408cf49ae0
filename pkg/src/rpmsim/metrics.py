"""Fairness, completion-time and reaction-time metrics over simulator traces."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

from .units import S

__all__ = [
    "jain_index",
    "MetricsRow",
    "Reaction",
    "ReactionSummary",
    "measure_reaction_time",
    "summarize_reactions",
    "mean_sd",
]


def jain_index(xs):
    """(sum x)^2 / (n * sum x^2); 1 for equal shares, 1/n when one flow takes everything."""
    xs = [float(x) for x in xs]
    if not xs:
        raise ValueError("jain_index of an empty sequence")
    if any(x < 0 or math.isnan(x) for x in xs):
        raise ValueError("jain_index needs non-negative values")
    top = max(xs)
    if top == 0:
        raise ValueError("jain_index undefined for all-zero input")
    # scaled by the largest share so tiny values do not underflow when squared
    xs = [x / top for x in xs]
    return math.fsum(xs) ** 2 / (len(xs) * math.fsum(x * x for x in xs))


def mean_sd(xs):
    xs = list(xs)
    if not xs:
        return math.nan, math.nan
    m = statistics.fmean(xs)
    return m, (statistics.stdev(xs) if len(xs) > 1 else 0.0)


@dataclass(frozen=True)
class MetricsRow:
    experiment: str
    mode: str
    flow: int
    throughput_bps: float = 0.0
    fct_s: float | None = None
    marks: int = 0
    drops: int = 0
    reaction_s: float | None = None

    def __post_init__(self):
        for name in ("throughput_bps", "fct_s", "reaction_s"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.marks < 0 or self.drops < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class Reaction:
    signal_id: int
    flow: int
    signal_t: int
    cwr_t: int | None

    @property
    def censored(self):
        return self.cwr_t is None

    @property
    def seconds(self):
        return None if self.cwr_t is None else (self.cwr_t - self.signal_t) / S


def measure_reaction_time(trace, node=None):
    """Pair every signal with the CWR packet it caused, as seen entering the AQM switch.

    A signal whose id never reappears on a CWR packet (the sender did not
    reduce because of it, or the run ended first) is returned censored.
    """
    cwr_at = {}
    for e in trace.events:
        if e.kind == "cwr" and e.signal_id >= 0 and (node is None or e.node == node):
            cwr_at.setdefault(e.signal_id, e.t)
    out = []
    for e in trace.events:
        if e.kind == "signal" and (node is None or e.node == node):
            out.append(Reaction(e.signal_id, e.flow, e.t, cwr_at.get(e.signal_id)))
    return out


@dataclass(frozen=True)
class ReactionSummary:
    flow: int
    n: int
    censored: int
    mean_s: float
    median_s: float
    sd_s: float


def summarize_reactions(reactions, t0=0):
    """Per-flow statistics of matched reactions whose signal fired at or after ``t0``."""
    by_flow = {}
    for r in reactions:
        if r.signal_t < t0:
            continue
        by_flow.setdefault(r.flow, []).append(r)
    out = {}
    for f, rs in sorted(by_flow.items()):
        vals = [r.seconds for r in rs if not r.censored]
        m, sd = mean_sd(vals)
        med = statistics.median(vals) if vals else math.nan
        out[f] = ReactionSummary(f, len(vals), len(rs) - len(vals), m, med, sd)
    return out
