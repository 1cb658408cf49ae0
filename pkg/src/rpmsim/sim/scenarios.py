"""Built-in topologies.

``dumbbell`` is the two-tier topology: senders H1..H10 on S1, the AQM switch
R1 in the middle, receivers H11..H20 on S2.  Capacities are given at full
hardware rate and multiplied by ``scale``.
"""

from __future__ import annotations

from ..endpoints import FlowSpec, Transport
from ..units import MS
from .config import AqmMode, AqmSpec, LinkSpec, NodeSpec, ScenarioConfig

__all__ = ["GBPS", "RECEIVER_DELAYS", "dumbbell", "fairness_scenario", "fct_scenario", "single_path", "N_PAIRS"]

GBPS = 1_000_000_000
N_PAIRS = 10

# one-way delay of S2-H_j in ms, one entry per receiver pair (H11/12, H13/14, ...)
RECEIVER_DELAYS = {
    1: (10, 10, 10, 10, 10),
    2: (10, 20, 30, 40, 50),
    3: (20, 40, 60, 80, 100),
}


def _senders(n):
    return [f"H{i}" for i in range(1, n + 1)]


def _receivers(n):
    return [f"H{i}" for i in range(n + 1, 2 * n + 1)]


def dumbbell(
    scale=0.001,
    host_gbps=10,
    core_gbps=100,
    bottleneck_gbps=10,
    sender_delay=0,
    receiver_delays=None,
    mode=AqmMode.NONE,
    aqm_node="R1",
    aqm_egress="S2",
    n_pairs=N_PAIRS,
    **kw,
):
    """H_i - S1 ==core== R1 --bottleneck-- S2 - H_{i+n}; delays in ns, one per receiver link."""
    senders, receivers = _senders(n_pairs), _receivers(n_pairs)
    nodes = [NodeSpec(h, "host") for h in senders + receivers]
    nodes += [NodeSpec("S1", "switch"), NodeSpec("R1", "switch"), NodeSpec("S2", "switch")]
    host_bps = int(host_gbps * GBPS * scale)
    links = [LinkSpec(h, "S1", host_bps, sender_delay) for h in senders]
    links.append(LinkSpec("S1", "R1", int(core_gbps * GBPS * scale), 0))
    links.append(LinkSpec("R1", "S2", int(bottleneck_gbps * GBPS * scale), 0))
    rd = receiver_delays or [0] * n_pairs
    if len(rd) != n_pairs:
        raise ValueError("need one receiver delay per pair")
    links += [LinkSpec("S2", h, host_bps, d) for h, d in zip(receivers, rd)]
    aqm = AqmSpec(mode=AqmMode.parse(mode), node=aqm_node, egress=aqm_egress)
    return ScenarioConfig(nodes=nodes, links=links, aqm=aqm, **kw)


def fairness_scenario(experiment, mode, scale=0.001, duration=30_000 * MS, seed=1, transport=Transport.TCP, **kw):
    """Ten long flows H_i -> H_{i+10}; 10 ms sender links, receiver links per experiment row."""
    per_pair = RECEIVER_DELAYS[experiment]
    rd = [per_pair[i // 2] * MS for i in range(N_PAIRS)]
    cfg = dumbbell(scale=scale, sender_delay=10 * MS, receiver_delays=rd, mode=mode, sim_duration=duration, rng_seed=seed, **kw)
    cfg.flows = [FlowSpec(s, r, None, 0, transport) for s, r in zip(_senders(N_PAIRS), _receivers(N_PAIRS))]
    return cfg


def fct_scenario(mode, scale=0.001, duration=10_000 * MS, seed=1, **kw):
    """All links at the host rate, no propagation delay, AQM on the S1 -> R1 port.  Flows are added by the caller."""
    return dumbbell(
        scale=scale, core_gbps=10, bottleneck_gbps=10, mode=mode,
        aqm_node="S1", aqm_egress="R1", sim_duration=duration, rng_seed=seed, **kw,
    )


def single_path(capacity_bps=10_000_000, delay_ns=0, mode=AqmMode.NONE, **kw):
    """H1 - S1 - H2: one switch, two links."""
    nodes = [NodeSpec("H1"), NodeSpec("H2"), NodeSpec("S1", "switch")]
    links = [LinkSpec("H1", "S1", capacity_bps, delay_ns), LinkSpec("S1", "H2", capacity_bps, delay_ns)]
    return ScenarioConfig(nodes=nodes, links=links, aqm=AqmSpec(AqmMode.parse(mode), "S1", "H2"), **kw)
