"""Simulated IPv4/TCP packet."""

from __future__ import annotations

from dataclasses import dataclass

# ECN codepoints (IP header, two bits)
NOT_ECT = 0
ECT1 = 1
ECT0 = 2
CE = 3
ECN_NAMES = {NOT_ECT: "NotECT", ECT1: "ECT1", ECT0: "ECT0", CE: "CE"}

# TCP flag bits, wire values
FIN = 0x01
SYN = 0x02
ACK = 0x10
ECE = 0x40
CWR = 0x80

PROTO_TCP = 6
HEADER_BYTES = 40
DEFAULT_MSS = 1460


def flag_names(flags):
    names = [(FIN, "FIN"), (SYN, "SYN"), (ACK, "ACK"), (ECE, "ECE"), (CWR, "CWR")]
    return "|".join(n for bit, n in names if flags & bit) or "-"


def ip_str(ip):
    return ".".join(str((ip >> s) & 0xFF) for s in (24, 16, 8, 0))


@dataclass(slots=True, eq=False)
class Packet:
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    proto: int = PROTO_TCP
    ecn: int = NOT_ECT
    flags: int = 0
    seq: int = 0
    ack_no: int = 0
    payload: int = 0
    size: int = HEADER_BYTES
    created_at: int = 0
    enqueue_time: int = 0
    # TCP timestamp option
    ts: int = 0
    ts_echo: int = -1
    # simulation bookkeeping, not header fields
    flow_id: int = -1
    signal_id: int = -1

    def __post_init__(self):
        if self.payload < 0:
            raise ValueError("negative payload")
        self.size = HEADER_BYTES + self.payload

    @property
    def key(self):
        return (self.src_ip, self.dst_ip, self.proto, self.src_port, self.dst_port)

    def has(self, flag):
        return bool(self.flags & flag)

    def __repr__(self):
        return (
            f"Packet({ip_str(self.src_ip)}:{self.src_port}->{ip_str(self.dst_ip)}:{self.dst_port} "
            f"{flag_names(self.flags)} {ECN_NAMES[self.ecn]} seq={self.seq} ack={self.ack_no} len={self.payload})"
        )
