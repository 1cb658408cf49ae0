"""Run recording and the immutable trace handed back by ``Network.run``."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from typing import NamedTuple

from ..units import S

__all__ = ["Event", "FlowRecord", "SimTrace", "Recorder", "FLOW_COLUMNS", "write_flow_csv", "write_events_csv"]


class Event(NamedTuple):
    t: int
    kind: str  # signal | ce_mark | ece_mark | drop_tail | drop_aqm | cwr
    flow: int
    node: str
    signal_id: int


@dataclass(frozen=True)
class FlowRecord:
    flow_id: int
    src: str
    dst: str
    transport: str
    size_mss: int | None
    start_ns: int
    completed_ns: int | None
    sent_pkts: int
    delivered_pkts: int
    dropped_pkts: int
    in_flight_pkts: int
    delivered_bytes: int
    signals: int
    ce_marks: int
    ece_marks: int
    timeouts: int
    retransmits: int

    @property
    def fct(self):
        if self.completed_ns is None:
            return None
        return (self.completed_ns - self.start_ns) / S


FLOW_COLUMNS = tuple(f.name for f in fields(FlowRecord)) + ("fct_s", "throughput_bps")


@dataclass(frozen=True)
class SimTrace:
    duration: int
    seed: int
    mode: str
    flows: tuple
    sample_times: tuple
    delivered: tuple  # per flow, cumulative delivered bytes at each sample time
    queue_samples: tuple  # (t, port, occupancy_bytes)
    events: tuple
    dispatched: int

    def delivered_at(self, flow, t):
        """Cumulative bytes delivered to the receiver of ``flow`` at the last sample <= t."""
        times = self.sample_times
        lo, hi = 0, len(times)
        while lo < hi:
            mid = (lo + hi) // 2
            if times[mid] <= t:
                lo = mid + 1
            else:
                hi = mid
        return 0 if lo == 0 else self.delivered[flow][lo - 1]

    def throughput(self, flow, t0, t1):
        """Goodput in bit/s over [t0, t1] (ns), from the sampled delivery counters."""
        if t1 <= t0:
            raise ValueError("empty measurement window")
        return (self.delivered_at(flow, t1) - self.delivered_at(flow, t0)) * 8 * S / (t1 - t0)

    def events_of(self, kind):
        return [e for e in self.events if e.kind == kind]

    def signals(self):
        return self.events_of("signal")

    def cwr_observations(self):
        return self.events_of("cwr")


class Recorder:
    """Mutable counters filled in during a run; frozen into a :class:`SimTrace`."""

    def __init__(self, sim, n_flows):
        self.sim = sim
        n = n_flows
        self.sent = [0] * n
        self.arrived = [0] * n
        self.dropped = [0] * n
        self.signal_count = [0] * n
        self.ce = [0] * n
        self.ece = [0] * n
        self.delivered_bytes = [0] * n
        self.completed = [None] * n
        self.events = []
        self.sample_times = []
        self.delivered_series = [[] for _ in range(n)]
        self.queue_samples = []
        self._next_signal = 0

    def on_sent(self, pkt):
        if pkt.flow_id >= 0:
            self.sent[pkt.flow_id] += 1

    def on_arrived(self, pkt):
        if pkt.flow_id >= 0:
            self.arrived[pkt.flow_id] += 1

    def on_drop(self, pkt, kind, node):
        f = pkt.flow_id
        if f >= 0:
            self.dropped[f] += 1
        self.events.append(Event(self.sim.now, kind, f, node, pkt.signal_id))

    def on_signal(self, pkt, node):
        sid = self._next_signal
        self._next_signal += 1
        f = pkt.flow_id
        if f >= 0:
            self.signal_count[f] += 1
        self.events.append(Event(self.sim.now, "signal", f, node, sid))
        return sid

    def on_ce(self, pkt, node):
        if pkt.flow_id >= 0:
            self.ce[pkt.flow_id] += 1
        self.events.append(Event(self.sim.now, "ce_mark", pkt.flow_id, node, pkt.signal_id))

    def on_ece(self, pkt, node):
        if pkt.flow_id >= 0:
            self.ece[pkt.flow_id] += 1
        self.events.append(Event(self.sim.now, "ece_mark", pkt.flow_id, node, pkt.signal_id))

    def on_cwr(self, pkt, node):
        self.events.append(Event(self.sim.now, "cwr", pkt.flow_id, node, pkt.signal_id))

    def delivered(self, flow, total_bytes):
        self.delivered_bytes[flow] = total_bytes

    def flow_completed(self, flow, now):
        if self.completed[flow] is None:
            self.completed[flow] = now

    def sample(self, t, ports):
        self.sample_times.append(t)
        for f, series in enumerate(self.delivered_series):
            series.append(self.delivered_bytes[f])
        for p in ports:
            self.queue_samples.append((t, p.name, p.queue.occupancy))


def write_flow_csv(trace, path, t0=None, t1=None):
    """Per-flow summary; throughput over [t0, t1] (default: whole run)."""
    t0 = 0 if t0 is None else t0
    t1 = trace.duration if t1 is None else t1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FLOW_COLUMNS)
        for rec in trace.flows:
            row = [getattr(rec, name) for name in FLOW_COLUMNS[:-2]]
            fct = rec.fct
            row.append("" if fct is None else f"{fct:.9f}")
            row.append(f"{trace.throughput(rec.flow_id, t0, t1):.3f}")
            w.writerow(["" if v is None else v for v in row])


def write_events_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(Event._fields)
        w.writerows(trace.events)
