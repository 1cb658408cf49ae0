"""Reverse-path congestion marking in the switch data plane.

A congestion signal from the AQM increments a counter at the hash of the
signalled flow's 5-tuple.  Every ACK-flagged TCP segment crossing the switch
looks up the counter at the hash of its own 5-tuple with source and
destination swapped, i.e. the flow it acknowledges; a positive counter sets
ECE on the segment and is decremented.

The per-port variant keeps one counter per congested egress port instead of
per flow.  ``forward_mark`` is the conventional CE marking baseline.
"""

from __future__ import annotations

import struct
import zlib
from collections import deque
from typing import NamedTuple

from .sim.packet import ACK, CE, ECE, ECT0, ECT1, NOT_ECT, PROTO_TCP

__all__ = [
    "FlowKey",
    "flow_hash",
    "CongestionStateRegister",
    "PortRegister",
    "on_congestion_signal",
    "on_reverse_packet",
    "forward_mark",
    "per_port_signal",
    "per_port_mark",
    "check_path_symmetry",
    "DEFAULT_REGISTER_SIZE",
    "DEFAULT_COUNTER_MAX",
]

DEFAULT_REGISTER_SIZE = 1 << 16
DEFAULT_COUNTER_MAX = 255

_PACK = struct.Struct("!IIBHH")


class FlowKey(NamedTuple):
    src_ip: int
    dst_ip: int
    proto: int
    src_port: int
    dst_port: int

    def swap(self):
        return FlowKey(self.dst_ip, self.src_ip, self.proto, self.dst_port, self.src_port)

    @classmethod
    def of(cls, pkt):
        return cls(pkt.src_ip, pkt.dst_ip, pkt.proto, pkt.src_port, pkt.dst_port)


def _check_pow2(n):
    if n < 1 or n & (n - 1):
        raise ValueError(f"register size must be a power of two, got {n}")


def flow_hash(key, register_size):
    """CRC-32 (IEEE) of the big-endian packed 5-tuple, masked to the register size.

    No per-run salt, so indices are identical across runs and processes.
    """
    _check_pow2(register_size)
    return zlib.crc32(_PACK.pack(*key)) & (register_size - 1)


class CongestionStateRegister:
    """Hash-indexed array of saturating counters.

    Alongside each counter the register queues the ids of the signals it
    holds (oldest first).  The ids never influence marking; they let the
    trace attribute each emitted mark to the signal that caused it.
    """

    def __init__(self, size=DEFAULT_REGISTER_SIZE, counter_max=DEFAULT_COUNTER_MAX):
        _check_pow2(size)
        if counter_max < 1:
            raise ValueError("counter_max must be positive")
        self.size = size
        self.mask = size - 1
        self.counter_max = counter_max
        self.cells = [0] * size
        self._origins = {}
        self.saturated = 0

    def index(self, key):
        return zlib.crc32(_PACK.pack(*key)) & self.mask

    def increment(self, pos, signal_id=-1):
        if self.cells[pos] >= self.counter_max:
            self.saturated += 1
            return False
        self.cells[pos] += 1
        self._origins.setdefault(pos, deque()).append(signal_id)
        return True

    def take(self, pos):
        """Consume one pending signal at ``pos``; returns its id, or None if the cell is empty."""
        if self.cells[pos] < 1:
            return None
        self.cells[pos] -= 1
        q = self._origins[pos]
        sid = q.popleft()
        if not q:
            del self._origins[pos]
        return sid

    def total(self):
        return sum(self.cells)

    def __getitem__(self, pos):
        return self.cells[pos]


def on_congestion_signal(reg, key, signal_id=-1):
    """Record an AQM signal for ``key``; returns False when the cell is saturated."""
    return reg.increment(reg.index(key), signal_id)


def on_reverse_packet(reg, pkt):
    """Set ECE on an ACK-flagged TCP segment if its forward flow has a pending signal.

    The packet is modified in place and returned.  ``pkt.signal_id`` is set
    to the id of the consumed signal.
    """
    if pkt.proto != PROTO_TCP or not pkt.flags & ACK:
        return pkt
    pos = zlib.crc32(_PACK.pack(pkt.dst_ip, pkt.src_ip, pkt.proto, pkt.dst_port, pkt.src_port)) & reg.mask
    if reg.cells[pos] >= 1:
        sid = reg.take(pos)
        pkt.flags |= ECE
        pkt.signal_id = sid
    return pkt


def forward_mark(pkt):
    """CE-mark an ECN-capable packet; returns None when the packet must be dropped instead."""
    if pkt.ecn == ECT0 or pkt.ecn == ECT1:
        pkt.ecn = CE
        return pkt
    if pkt.ecn == CE:
        return pkt
    assert pkt.ecn == NOT_ECT
    return None


class PortRegister:
    """One saturating counter per egress port."""

    def __init__(self, counter_max=DEFAULT_COUNTER_MAX):
        self.counter_max = counter_max
        self.cells = {}
        self._origins = {}
        self.saturated = 0

    def increment(self, port, signal_id=-1):
        n = self.cells.get(port, 0)
        if n >= self.counter_max:
            self.saturated += 1
            return False
        self.cells[port] = n + 1
        self._origins.setdefault(port, deque()).append(signal_id)
        return True

    def take(self, port):
        n = self.cells.get(port, 0)
        if n < 1:
            return None
        self.cells[port] = n - 1
        return self._origins[port].popleft()

    def __getitem__(self, port):
        return self.cells.get(port, 0)


def per_port_signal(reg, egress_port, signal_id=-1):
    return reg.increment(egress_port, signal_id)


def per_port_mark(reg, pkt, egress_port):
    """Mark ``pkt`` if ``egress_port`` (the port its forward flow leaves by) holds a signal.

    The caller resolves ``egress_port`` by routing the swapped 5-tuple.
    """
    if pkt.proto != PROTO_TCP or not pkt.flags & ACK:
        return pkt
    sid = reg.take(egress_port)
    if sid is not None:
        pkt.flags |= ECE
        pkt.signal_id = sid
    return pkt


def check_path_symmetry(network, key, switch):
    """True iff ``switch`` lies on both the route of ``key`` and the route of ``key.swap()``.

    Raises ``KeyError`` when either direction is unroutable.
    """
    fwd = network.route_ips(key[0], key[1])
    rev = network.route_ips(key[1], key[0])
    return switch in fwd and switch in rev
