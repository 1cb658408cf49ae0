"""Transport endpoints: ECN TCP (AIMD) and DCTCP.

The window logic lives in small state objects driven by pure-ish functions
(``tcp_sender_on_ack``, ``dctcp_sender_on_ack``, ``loss_recovery``, the two
receiver functions) so it can be checked against straight-line oracles.
``TcpSender`` and ``TcpReceiver`` wrap them with sequence numbers,
retransmission and timers for use inside the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .sim.packet import ACK, CE, CWR, DEFAULT_MSS, ECE, ECT0, NOT_ECT, SYN, Packet
from .units import MS

__all__ = [
    "Transport",
    "WindowAction",
    "FlowSpec",
    "TcpSenderState",
    "TcpReceiverState",
    "DctcpState",
    "tcp_receiver_on_data",
    "dctcp_receiver_on_data",
    "tcp_sender_on_ack",
    "dctcp_sender_on_ack",
    "loss_recovery",
    "rto_for",
    "TcpSender",
    "TcpReceiver",
    "long_flows",
    "short_flows",
]

MIN_RTO = 200 * MS
INITIAL_RTO = 1000 * MS
MAX_RTO = 60_000 * MS
INITIAL_CWND = 10.0
DUPACK_THRESHOLD = 3


class Transport(str, Enum):
    TCP = "tcp"
    DCTCP = "dctcp"


class WindowAction(str, Enum):
    NONE = "none"
    INCREASE = "increase"
    REDUCE = "reduce"
    FAST_RETRANSMIT = "fast_retransmit"
    TIMEOUT = "timeout"


@dataclass
class FlowSpec:
    """One transfer.  ``size`` in MSS-sized segments, ``None`` for a long-lived flow."""

    src: str
    dst: str
    size: int | None = None
    start: int = 0
    transport: Transport = Transport.TCP

    def __post_init__(self):
        self.transport = Transport(self.transport)
        if self.size is not None and self.size < 1:
            raise ValueError(f"flow size must be >= 1 segment, got {self.size}")
        if self.start < 0:
            raise ValueError("flow start must be non-negative")


def long_flows(pairs, start=0, transport=Transport.TCP):
    return [FlowSpec(src, dst, None, start, transport) for src, dst in pairs]


def short_flows(pairs, size, starts, transport=Transport.DCTCP):
    return [FlowSpec(src, dst, size, t, transport) for (src, dst), t in zip(pairs, starts)]


@dataclass
class TcpSenderState:
    cwnd: float = INITIAL_CWND
    ssthresh: float = math.inf
    srtt: int | None = None
    last_reduction: int | None = None
    cwr_pending: bool = False
    a: float = 1.0
    b: float = 0.5
    reductions: int = 0

    def may_reduce(self, now):
        if self.last_reduction is None or self.srtt is None:
            return True
        return now - self.last_reduction >= self.srtt

    def grow(self):
        if self.cwnd < self.ssthresh:
            self.cwnd += 1.0
        else:
            self.cwnd += self.a / self.cwnd

    def cut(self, factor, now):
        self.cwnd = max(1.0, self.cwnd * factor)
        self.ssthresh = self.cwnd
        self.last_reduction = now
        self.cwr_pending = True
        self.reductions += 1

    def rtt_sample(self, rtt):
        if self.srtt is None:
            self.srtt = rtt
        else:
            self.srtt += (rtt - self.srtt) // 8


@dataclass
class TcpReceiverState:
    ece_latch: bool = False
    origin: int = -1


@dataclass
class DctcpState:
    alpha: float = 1.0
    g: float = 1.0 / 16.0
    dctcp_ce: bool = False
    bytes_acked: int = 0
    bytes_marked: int = 0
    origin: int = -1


def _latch(state, pkt):
    if pkt.flags & CWR:
        state.ece_latch = False
        state.origin = -1
    if pkt.ecn == CE:
        if not state.ece_latch:
            state.origin = pkt.signal_id
        state.ece_latch = True
    return state.ece_latch


def _make_ack(pkt, ece, origin, ack_no, now):
    flags = ACK | ECE if ece else ACK
    return Packet(
        src_ip=pkt.dst_ip,
        dst_ip=pkt.src_ip,
        src_port=pkt.dst_port,
        dst_port=pkt.src_port,
        proto=pkt.proto,
        ecn=NOT_ECT,
        flags=flags,
        ack_no=ack_no,
        created_at=now,
        ts=now,
        ts_echo=pkt.ts,
        flow_id=pkt.flow_id,
        signal_id=origin if ece else -1,
    )


def tcp_receiver_on_data(state: TcpReceiverState, pkt, ack_no=None, now=0):
    """ACK for one in-order data segment; ECE is a latch set by CE and cleared by CWR."""
    ece = _latch(state, pkt)
    if ack_no is None:
        ack_no = pkt.seq + pkt.payload
    return _make_ack(pkt, ece, state.origin, ack_no, now)


def dctcp_receiver_on_data(state: DctcpState, pkt, ack_no=None, now=0):
    """Immediate ACK; DCTCP.CE is set by a CE segment and cleared by CWR, ECE echoes it."""
    if pkt.flags & CWR:
        state.dctcp_ce = False
        state.origin = -1
    if pkt.ecn == CE:
        if not state.dctcp_ce:
            state.origin = pkt.signal_id
        state.dctcp_ce = True
    if ack_no is None:
        ack_no = pkt.seq + pkt.payload
    return _make_ack(pkt, state.dctcp_ce, state.origin, ack_no, now)


def tcp_sender_on_ack(state: TcpSenderState, ece, now):
    """Window update for an ACK of new data.

    ECE halves the window (factor 1 - b) at most once per smoothed RTT;
    every other ACK grows it (slow start below ssthresh, a/cwnd above).
    """
    if ece and state.may_reduce(now):
        state.cut(1.0 - state.b, now)
        return WindowAction.REDUCE
    state.grow()
    return WindowAction.INCREASE


def dctcp_sender_on_ack(state: TcpSenderState, dc: DctcpState, ece, acked_bytes, now, end_of_window):
    """Accumulate marked bytes; at the end of an observation window update alpha and cut by alpha/2."""
    dc.bytes_acked += acked_bytes
    if ece:
        dc.bytes_marked += acked_bytes
    if end_of_window and dc.bytes_acked > 0:
        frac = dc.bytes_marked / dc.bytes_acked
        dc.alpha = (1.0 - dc.g) * dc.alpha + dc.g * frac
        dc.bytes_acked = 0
        dc.bytes_marked = 0
        if frac > 0:
            state.cut(1.0 - dc.alpha / 2.0, now)
            return WindowAction.REDUCE
    state.grow()
    return WindowAction.INCREASE


def loss_recovery(state: TcpSenderState, event, now, flight=None):
    """``event`` is ``"dupacks"`` (third duplicate ACK) or ``"timeout"``."""
    if event == "dupacks":
        state.cut(0.5, now)
        return WindowAction.FAST_RETRANSMIT
    if event == "timeout":
        base = state.cwnd if flight is None else flight
        state.ssthresh = max(base / 2.0, 2.0)
        state.cwnd = 1.0
        state.last_reduction = now
        state.reductions += 1
        return WindowAction.TIMEOUT
    raise ValueError(f"unknown loss event {event!r}")


def rto_for(srtt):
    if srtt is None:
        return INITIAL_RTO
    return max(MIN_RTO, 4 * srtt)


class TcpSender:
    """Sender half of one connection: handshake, window, retransmission, timers.

    Sequence space is counted in segments internally; packets carry byte
    offsets.  Loss recovery is NewReno-like: fast retransmit on the third
    duplicate ACK, one retransmission per partial ACK, window inflated by the
    duplicate ACK count while recovering.  After an ECN-triggered cut the
    sender keeps transmitting at the reduced rate (proportional rate
    reduction) rather than falling silent until the flight drains to the new
    window, so the CWR-flagged segment leaves within a couple of ACKs.
    """

    def __init__(self, flow_id, spec: FlowSpec, host, peer_ip, sport, dport, mss=DEFAULT_MSS, trace=None):
        self.flow_id = flow_id
        self.spec = spec
        self.host = host
        self.sim = host.sim
        self.src_ip = host.ip
        self.dst_ip = peer_ip
        self.sport = sport
        self.dport = dport
        self.mss = mss
        self.trace = trace
        self.total = spec.size  # segments, None = unbounded
        self.st = TcpSenderState()
        self.dc = DctcpState() if spec.transport == Transport.DCTCP else None
        self.established = False
        self.done = False
        self.snd_una = 0
        self.snd_nxt = 0
        self.high_sent = 0
        self.dupacks = 0
        self.recover = 0
        self.in_recovery = False
        self.window_end = 0
        # proportional rate reduction after an ECN cut
        self.prr = False
        self.prr_recover = 0
        self.prr_fs = 1
        self.prr_delivered = 0
        self.prr_out = 0
        self.cwr_origin = -1
        self.dc_origin = -1
        self.rto = INITIAL_RTO
        self.backoff = 1
        self.rto_deadline = None
        self._timer_armed = False
        self.completed_at = None
        self.retransmits = 0
        self.timeouts = 0

    # -- timers -------------------------------------------------------------

    def _arm(self):
        self.rto_deadline = self.sim.now + self.rto * self.backoff
        if not self._timer_armed:
            self._timer_armed = True
            self.sim.at(self.rto_deadline, self._timer_fire)

    def _disarm(self):
        self.rto_deadline = None

    def _timer_fire(self, _):
        self._timer_armed = False
        if self.rto_deadline is None or self.done:
            return
        if self.sim.now < self.rto_deadline:
            self._timer_armed = True
            self.sim.at(self.rto_deadline, self._timer_fire)
            return
        self._on_timeout()

    # -- sending ------------------------------------------------------------

    def start(self, _=None):
        self._send_syn()

    def _send_syn(self):
        now = self.sim.now
        # DCTCP stacks send every segment ECN-capable, the handshake included
        pkt = Packet(
            self.src_ip, self.dst_ip, self.sport, self.dport,
            ecn=NOT_ECT if self.dc is None else ECT0,
            flags=SYN, created_at=now, ts=now, flow_id=self.flow_id,
        )
        self.host.send(pkt)
        self._arm()

    def _data_packet(self, seg, now):
        flags = ACK
        sig = -1
        if self.st.cwr_pending:
            flags |= CWR
            self.st.cwr_pending = False
            sig = self.cwr_origin
            self.cwr_origin = -1
        return Packet(
            self.src_ip, self.dst_ip, self.sport, self.dport,
            ecn=ECT0, flags=flags, seq=seg * self.mss, ack_no=1, payload=self.mss,
            created_at=now, ts=now, flow_id=self.flow_id, signal_id=sig,
        )

    def _window(self):
        w = int(self.st.cwnd)
        if self.in_recovery:
            w += self.dupacks
        return max(w, 1)

    def _prr_budget(self, delivered):
        target = self.st.cwnd
        pipe = self.snd_nxt - self.snd_una
        if pipe > target:
            return math.ceil(self.prr_delivered * target / self.prr_fs) - self.prr_out
        return int(min(target - pipe, max(self.prr_delivered - self.prr_out, delivered) + 1))

    def _pump(self, delivered=0):
        now = self.sim.now
        limit = self.total if self.total is not None else math.inf
        if self.prr:
            budget = self._prr_budget(delivered)
            win = self.snd_nxt - self.snd_una + max(budget, 0)
        else:
            win = self._window()
        sent = False
        while self.snd_nxt < limit and self.snd_nxt - self.snd_una < win:
            if self.prr:
                self.prr_out += 1
            seg = self.snd_nxt
            if seg < self.high_sent:
                self.retransmits += 1
            self.host.send(self._data_packet(seg, now))
            self.snd_nxt += 1
            if self.snd_nxt > self.high_sent:
                self.high_sent = self.snd_nxt
            sent = True
        if sent and self.rto_deadline is None:
            self._arm()

    def _retransmit(self, seg):
        self.retransmits += 1
        self.host.send(self._data_packet(seg, self.sim.now))

    # -- receiving ----------------------------------------------------------

    def receive(self, pkt):
        now = self.sim.now
        if not self.established:
            if pkt.flags & SYN and pkt.flags & ACK:
                self.established = True
                if pkt.ts_echo >= 0:
                    self.st.rtt_sample(now - pkt.ts_echo)
                    self.rto = rto_for(self.st.srtt)
                self.backoff = 1
                self._disarm()
                self._pump()
            return
        if self.done or not pkt.flags & ACK or pkt.flags & SYN:
            return
        ack_seg = pkt.ack_no // self.mss
        ece = bool(pkt.flags & ECE)
        if ack_seg > self.snd_una:
            self._on_new_ack(pkt, ack_seg, ece, now)
        elif ack_seg == self.snd_una and self.snd_nxt > self.snd_una:
            self._on_dupack(now)

    def _on_new_ack(self, pkt, ack_seg, ece, now):
        acked = ack_seg - self.snd_una
        prior_flight = self.snd_nxt - self.snd_una
        self.snd_una = ack_seg
        if self.snd_nxt < self.snd_una:
            self.snd_nxt = self.snd_una
        if pkt.ts_echo >= 0:
            self.st.rtt_sample(now - pkt.ts_echo)
            self.rto = rto_for(self.st.srtt)
        self.backoff = 1
        st = self.st
        if self.in_recovery:
            if ack_seg >= self.recover:
                self.in_recovery = False
                self.dupacks = 0
            else:
                # partial ACK: next hole
                self._retransmit(self.snd_una)
                self.dupacks = 0
        else:
            self.dupacks = 0
            if self.prr:
                self.prr_delivered += acked
                if ack_seg >= self.prr_recover:
                    self.prr = False
            if self.dc is None:
                if ece and st.may_reduce(now):
                    self.cwr_origin = pkt.signal_id
                act = tcp_sender_on_ack(st, ece, now)
            else:
                if ece and self.dc_origin < 0:
                    self.dc_origin = pkt.signal_id
                end = ack_seg >= self.window_end
                act = dctcp_sender_on_ack(st, self.dc, ece, acked * self.mss, now, end)
                if end:
                    self.window_end = self.snd_nxt
                    if act == WindowAction.REDUCE:
                        self.cwr_origin = self.dc_origin
                    self.dc_origin = -1
            if act == WindowAction.REDUCE:
                self.prr = True
                self.prr_recover = self.snd_nxt
                self.prr_fs = max(prior_flight, 1)
                self.prr_delivered = acked
                self.prr_out = 0
        if self.total is not None and self.snd_una >= self.total:
            self.done = True
            self.completed_at = now
            self._disarm()
            if self.trace is not None:
                self.trace.flow_completed(self.flow_id, now)
            return
        if self.snd_una < self.snd_nxt:
            self.rto_deadline = None
            self._arm()
        else:
            self._disarm()
        self._pump(acked)

    def _on_dupack(self, now):
        self.dupacks += 1
        if self.in_recovery:
            self._pump()
            return
        if self.dupacks == DUPACK_THRESHOLD:
            loss_recovery(self.st, "dupacks", now)
            self.cwr_origin = -1
            self.prr = False
            self.in_recovery = True
            self.recover = self.snd_nxt
            self._retransmit(self.snd_una)
            self.rto_deadline = None
            self._arm()

    def _on_timeout(self):
        now = self.sim.now
        self.timeouts += 1
        self.backoff = min(self.backoff * 2, MAX_RTO // max(self.rto, 1))
        if not self.established:
            self._send_syn()
            return
        loss_recovery(self.st, "timeout", now, flight=self.snd_nxt - self.snd_una)
        self.cwr_origin = -1
        self.prr = False
        self.in_recovery = False
        self.dupacks = 0
        self.snd_nxt = self.snd_una
        self.window_end = self.snd_una
        self.rto_deadline = None
        self._pump()
        if self.rto_deadline is None:
            self._arm()


class TcpReceiver:
    """Receiver half: cumulative ACK per data segment, out-of-order segments buffered."""

    def __init__(self, flow_id, transport, host, mss=DEFAULT_MSS, trace=None):
        self.flow_id = flow_id
        self.host = host
        self.sim = host.sim
        self.mss = mss
        self.trace = trace
        self.transport = transport
        self.rcv_nxt = 0
        self.ooo = set()
        if transport == Transport.DCTCP:
            self.state = DctcpState()
            self._on_data = dctcp_receiver_on_data
        else:
            self.state = TcpReceiverState()
            self._on_data = tcp_receiver_on_data
        self.delivered_bytes = 0

    def receive(self, pkt):
        now = self.sim.now
        if pkt.flags & SYN:
            synack = Packet(
                pkt.dst_ip, pkt.src_ip, pkt.dst_port, pkt.src_port,
                ecn=ECT0 if self.transport == Transport.DCTCP else NOT_ECT,
                flags=SYN | ACK, ack_no=1, created_at=now, ts=now, ts_echo=pkt.ts, flow_id=pkt.flow_id,
            )
            self.host.send(synack)
            return
        if pkt.payload <= 0:
            return
        seg = pkt.seq // self.mss
        if seg == self.rcv_nxt:
            self.rcv_nxt += 1
            self.delivered_bytes += pkt.payload
            while self.rcv_nxt in self.ooo:
                self.ooo.discard(self.rcv_nxt)
                self.rcv_nxt += 1
                self.delivered_bytes += self.mss
        elif seg > self.rcv_nxt:
            self.ooo.add(seg)
        ack = self._on_data(self.state, pkt, self.rcv_nxt * self.mss, now)
        if self.trace is not None:
            self.trace.delivered(self.flow_id, self.delivered_bytes)
        self.host.send(ack)
