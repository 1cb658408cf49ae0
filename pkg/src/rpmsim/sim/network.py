"""Hosts, switches, links and byte-limited FIFO output ports."""

from __future__ import annotations

import random
from collections import deque
from enum import Enum

from ..aqm import CodelState, Decision, codel_evaluate
from ..endpoints import TcpReceiver, TcpSender
from ..rpm import (
    CongestionStateRegister,
    FlowKey,
    PortRegister,
    check_path_symmetry,
    forward_mark,
    on_congestion_signal,
    per_port_signal,
)
from ..units import serialization_ns
from .config import AqmMode, ScenarioConfig
from .engine import SimulationError, Simulator
from .packet import ACK, CE, CWR, ECE, PROTO_TCP, Packet
from .trace import FlowRecord, Recorder, SimTrace

__all__ = [
    "EnqueueResult",
    "OutputQueue",
    "enqueue",
    "dequeue",
    "Port",
    "Host",
    "Switch",
    "AqmPort",
    "Network",
    "build_topology",
    "run",
    "simulate",
]

FIRST_SPORT = 10000
DPORT = 5001


class EnqueueResult(Enum):
    ACCEPTED = "accepted"
    TAIL_DROPPED = "tail_dropped"


class OutputQueue:
    __slots__ = ("buffer_limit", "occupancy", "fifo", "drops")

    def __init__(self, buffer_limit):
        if buffer_limit < 1:
            raise ValueError("buffer limit must be positive")
        self.buffer_limit = buffer_limit
        self.occupancy = 0
        self.fifo = deque()
        self.drops = 0

    def enqueue(self, pkt, now):
        if pkt.size <= 0:
            raise SimulationError("packet without size")
        if self.occupancy + pkt.size > self.buffer_limit:
            self.drops += 1
            return EnqueueResult.TAIL_DROPPED
        pkt.enqueue_time = now
        self.fifo.append(pkt)
        self.occupancy += pkt.size
        return EnqueueResult.ACCEPTED

    def dequeue(self, now):
        if not self.fifo:
            raise SimulationError("dequeue on empty queue")
        pkt = self.fifo.popleft()
        self.occupancy -= pkt.size
        return pkt, now - pkt.enqueue_time

    def __len__(self):
        return len(self.fifo)


def enqueue(queue, pkt, now):
    return queue.enqueue(pkt, now)


def dequeue(queue, now):
    return queue.dequeue(now)


class Port:
    """Egress side of one link direction: queue plus serializer."""

    __slots__ = ("name", "node", "peer", "sim", "capacity", "delay", "queue", "busy", "aqm", "rec", "tx_packets", "_ser")

    def __init__(self, node, peer, capacity, delay, buffer_limit, sim, rec):
        self.name = f"{node.name}->{peer.name}"
        self.node = node
        self.peer = peer
        self.sim = sim
        self.capacity = capacity
        self.delay = delay
        self.queue = OutputQueue(buffer_limit)
        self.busy = False
        self.aqm = None
        self.rec = rec
        self.tx_packets = 0
        self._ser = {}

    def ser(self, size):
        t = self._ser.get(size)
        if t is None:
            t = self._ser[size] = serialization_ns(size, self.capacity)
        return t

    def send(self, pkt):
        if self.queue.enqueue(pkt, self.sim.now) is EnqueueResult.TAIL_DROPPED:
            self.rec.on_drop(pkt, "drop_tail", self.node.name)
            return False
        if not self.busy:
            self._start()
        return True

    def _start(self, _=None):
        q = self.queue
        sim = self.sim
        while q.fifo:
            pkt, sojourn = q.dequeue(sim.now)
            if self.aqm is not None:
                pkt = self.aqm.on_dequeue(pkt, sojourn, sim.now)
                if pkt is None:
                    continue
            self.busy = True
            self.tx_packets += 1
            tx = self.ser(pkt.size)
            sim.after(tx, self._start)
            sim.after(tx + self.delay, self.peer.receive, pkt)
            return
        self.busy = False


class Node:
    def __init__(self, name, sim, rec):
        self.name = name
        self.sim = sim
        self.rec = rec
        self.ports = {}
        self.fib = {}

    def route(self, dst_ip):
        port = self.fib.get(dst_ip)
        if port is None:
            raise SimulationError(f"{self.name}: no route to {dst_ip:#x}")
        return port


class Host(Node):
    kind = "host"

    def __init__(self, name, ip, sim, rec):
        super().__init__(name, sim, rec)
        self.ip = ip
        self.agents = {}

    def attach(self, remote_ip, remote_port, local_port, agent):
        self.agents[(remote_ip, remote_port, local_port)] = agent

    def send(self, pkt):
        self.rec.on_sent(pkt)
        self.route(pkt.dst_ip).send(pkt)

    def receive(self, pkt):
        self.rec.on_arrived(pkt)
        agent = self.agents.get((pkt.src_ip, pkt.src_port, pkt.dst_port))
        if agent is not None:
            agent.receive(pkt)


class Switch(Node):
    kind = "switch"

    def __init__(self, name, sim, rec):
        super().__init__(name, sim, rec)
        self.ingress = None

    def receive(self, pkt):
        if self.ingress is not None:
            self.ingress(pkt)
        port = self.fib.get(pkt.dst_ip)
        if port is None:
            raise SimulationError(f"{self.name}: no route for {pkt!r}")
        port.send(pkt)


class AqmPort:
    """CoDel on one egress port plus the mode-specific reaction to its signals.

    ``FWD`` CE-marks (or drops) the signalled packet.  The RPM modes leave it
    untouched and record the signal in a register that is drained by
    ``ingress`` on ACK-flagged TCP segments entering the switch.  Flows whose
    reverse route avoids the switch fall back to CE marking.
    """

    def __init__(self, network, switch, port, spec):
        self.net = network
        self.switch = switch
        self.port = port
        self.mode = spec.mode
        self.codel = CodelState(target=spec.target_ns, interval=spec.interval_ns)
        self.maxpacket = spec.maxpacket
        self.rec = network.rec
        self.register = None
        if self.mode == AqmMode.RPM_PER_FLOW:
            self.register = CongestionStateRegister(spec.register_size, spec.counter_max)
        elif self.mode == AqmMode.RPM_PER_PORT:
            self.register = PortRegister(spec.counter_max)
        self._sym = {}

    def symmetric(self, pkt):
        key = (pkt.src_ip, pkt.dst_ip, pkt.proto, pkt.src_port, pkt.dst_port)
        ok = self._sym.get(key)
        if ok is None:
            try:
                ok = check_path_symmetry(self.net, FlowKey(*key), self.switch.name)
            except KeyError:
                ok = False
            self._sym[key] = ok
        return ok

    def on_dequeue(self, pkt, sojourn, now):
        if self.port.queue.occupancy <= self.maxpacket:
            # at most one MTU left behind: the delay is serialization, not a standing queue
            sojourn = 0
        if codel_evaluate(self.codel, sojourn, now) is Decision.FORWARD:
            return pkt
        name = self.switch.name
        sid = self.rec.on_signal(pkt, name)
        if self.mode == AqmMode.FWD or not self.symmetric(pkt):
            was_ce = pkt.ecn == CE
            if forward_mark(pkt) is None:
                pkt.signal_id = sid
                self.rec.on_drop(pkt, "drop_aqm", name)
                return None
            if not was_ce:
                pkt.signal_id = sid
                self.rec.on_ce(pkt, name)
            return pkt
        if self.mode == AqmMode.RPM_PER_FLOW:
            on_congestion_signal(self.register, (pkt.src_ip, pkt.dst_ip, pkt.proto, pkt.src_port, pkt.dst_port), sid)
        else:
            per_port_signal(self.register, self.port.name, sid)
        return pkt

    def ingress(self, pkt):
        flags = pkt.flags
        if pkt.proto == PROTO_TCP and flags & ACK and self.register is not None:
            if self.mode == AqmMode.RPM_PER_FLOW:
                reg = self.register
                pos = reg.index((pkt.dst_ip, pkt.src_ip, pkt.proto, pkt.dst_port, pkt.src_port))
                if reg.cells[pos]:
                    pkt.signal_id = reg.take(pos)
                    pkt.flags = flags | ECE
                    self.rec.on_ece(pkt, self.switch.name)
            elif self.switch.fib.get(pkt.src_ip) is self.port:
                sid = self.register.take(self.port.name)
                if sid is not None:
                    pkt.signal_id = sid
                    pkt.flags = flags | ECE
                    self.rec.on_ece(pkt, self.switch.name)
        if flags & CWR and pkt.payload > 0:
            self.rec.on_cwr(pkt, self.switch.name)


class Network:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.sim = Simulator()
        self.rec = Recorder(self.sim, len(config.flows))
        self.nodes = {}
        self.hosts = {}
        self.ip_of = {}
        self.links = list(config.links)
        self.aqm = None
        self.senders = []
        self.receivers = []
        self.monitored = []
        self.flow_starts = []

    # -- routing ------------------------------------------------------------

    def route(self, src, dst):
        """Node names visited from host ``src`` to host ``dst`` following the FIBs."""
        dst_ip = self.ip_of[dst]
        path = [src]
        node = self.nodes[src]
        while node.name != dst:
            port = node.fib.get(dst_ip)
            if port is None:
                raise KeyError(f"no route from {node.name} to {dst}")
            node = port.peer
            if node.name in path:
                raise KeyError(f"routing loop towards {dst} at {node.name}")
            path.append(node.name)
        return path

    def route_ips(self, src_ip, dst_ip):
        return self.route(self._host_by_ip[src_ip], self._host_by_ip[dst_ip])

    def in_flight(self):
        """Packets per flow currently queued or on a wire."""
        counts = {}
        for node in self.nodes.values():
            for port in node.ports.values():
                for pkt in port.queue.fifo:
                    counts[pkt.flow_id] = counts.get(pkt.flow_id, 0) + 1
        for arg in self.sim.pending_args():
            if isinstance(arg, Packet):
                counts[arg.flow_id] = counts.get(arg.flow_id, 0) + 1
        return counts

    # -- running ------------------------------------------------------------

    def _sample(self, _):
        sim = self.sim
        self.rec.sample(sim.now, self.monitored)
        sim.after(self.config.sample_interval, self._sample)

    def run(self, until=None):
        until = self.config.sim_duration if until is None else until
        if until <= 0:
            raise SimulationError("horizon must be positive")
        if self.config.flows and not self._started:
            self.sim.at(0, self._sample)
        self._started = True
        self.sim.run(until)
        return self.trace()

    _started = False

    def trace(self):
        rec = self.rec
        inflight = self.in_flight()
        flows = []
        for i, spec in enumerate(self.config.flows):
            snd = self.senders[i]
            flows.append(
                FlowRecord(
                    flow_id=i,
                    src=spec.src,
                    dst=spec.dst,
                    transport=spec.transport.value,
                    size_mss=spec.size,
                    start_ns=self.flow_starts[i],
                    completed_ns=rec.completed[i],
                    sent_pkts=rec.sent[i],
                    delivered_pkts=rec.arrived[i],
                    dropped_pkts=rec.dropped[i],
                    in_flight_pkts=inflight.get(i, 0),
                    delivered_bytes=rec.delivered_bytes[i],
                    signals=rec.signal_count[i],
                    ce_marks=rec.ce[i],
                    ece_marks=rec.ece[i],
                    timeouts=snd.timeouts,
                    retransmits=snd.retransmits,
                )
            )
        return SimTrace(
            duration=self.sim.now,
            seed=self.config.rng_seed,
            mode=self.config.aqm.mode.value,
            flows=tuple(flows),
            sample_times=tuple(rec.sample_times),
            delivered=tuple(tuple(s) for s in rec.delivered_series),
            queue_samples=tuple(rec.queue_samples),
            events=tuple(rec.events),
            dispatched=self.sim.dispatched,
        )


def _compute_fibs(net, cfg):
    adj = {name: [] for name in net.nodes}
    for l in cfg.links:
        adj[l.a].append(l.b)
        adj[l.b].append(l.a)
    order = {n.name: i for i, n in enumerate(cfg.nodes)}
    for nbrs in adj.values():
        nbrs.sort(key=order.__getitem__)
    for hname, host in net.hosts.items():
        # BFS from the destination; first discovery wins, neighbours in config order
        nxt = {hname: None}
        frontier = deque([hname])
        while frontier:
            u = frontier.popleft()
            for v in adj[u]:
                if v not in nxt:
                    nxt[v] = u
                    frontier.append(v)
        for name, hop in nxt.items():
            if hop is not None:
                node = net.nodes[name]
                node.fib[host.ip] = node.ports[hop]
    for r in cfg.routes:
        node = net.nodes[r.node]
        dst = net.nodes[r.dst]
        if not isinstance(dst, Host):
            raise SimulationError(f"route destination {r.dst} is not a host")
        node.fib[dst.ip] = node.ports[r.via]


def build_topology(config: ScenarioConfig) -> Network:
    """Instantiate nodes, ports, routes, AQM and transport agents for ``config``."""
    cfg = config.validate()
    net = Network(cfg)
    sim, rec = net.sim, net.rec
    host_idx = 0
    for n in cfg.nodes:
        if n.kind == "host":
            host_idx += 1
            ip = (10 << 24) | (host_idx >> 8 & 0xFF) << 8 | (host_idx & 0xFF)
            node = Host(n.name, ip, sim, rec)
            net.hosts[n.name] = node
            net.ip_of[n.name] = ip
        else:
            node = Switch(n.name, sim, rec)
        net.nodes[n.name] = node
    net._host_by_ip = {ip: name for name, ip in net.ip_of.items()}
    switch_buffer = cfg.effective_buffer_limit()
    for l in cfg.links:
        a, b = net.nodes[l.a], net.nodes[l.b]
        for src, dst in ((a, b), (b, a)):
            if l.buffer_bytes is not None:
                limit = l.buffer_bytes
            elif isinstance(src, Host):
                limit = cfg.host_buffer_limit
            else:
                limit = switch_buffer
            src.ports[dst.name] = Port(src, dst, l.capacity_bps, l.delay_ns, limit, sim, rec)
    _compute_fibs(net, cfg)

    spec = cfg.aqm
    if spec.mode != AqmMode.NONE:
        sw = net.nodes[spec.node]
        port = sw.ports[spec.egress]
        net.aqm = AqmPort(net, sw, port, spec)
        port.aqm = net.aqm
        sw.ingress = net.aqm.ingress
        net.monitored = [port]
    else:
        net.monitored = [p for n in net.nodes.values() if isinstance(n, Switch) for p in n.ports.values()]

    rng = random.Random(cfg.rng_seed)
    for i, f in enumerate(cfg.flows):
        src, dst = net.hosts[f.src], net.hosts[f.dst]
        sport = FIRST_SPORT + i
        snd = TcpSender(i, f, src, dst.ip, sport, DPORT, mss=cfg.mss, trace=rec)
        rcv = TcpReceiver(i, f.transport, dst, mss=cfg.mss, trace=rec)
        src.attach(dst.ip, DPORT, sport, snd)
        dst.attach(src.ip, sport, DPORT, rcv)
        start = f.start + (rng.randrange(cfg.start_jitter + 1) if cfg.start_jitter > 0 else 0)
        net.flow_starts.append(start)
        net.senders.append(snd)
        net.receivers.append(rcv)
        sim.at(start, snd.start)
    return net


def run(network: Network, until=None) -> SimTrace:
    return network.run(until)


def simulate(config: ScenarioConfig, until=None) -> SimTrace:
    return build_topology(config).run(until)
