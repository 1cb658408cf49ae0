"""Integer nanosecond time base."""

NS = 1
US = 1_000
MS = 1_000_000
S = 1_000_000_000


def seconds(t_ns):
    return t_ns / S


def from_seconds(t):
    return int(round(t * S))


def serialization_ns(size_bytes, capacity_bps):
    """Transmission time of ``size_bytes`` on a ``capacity_bps`` link, rounded up."""
    return -(-size_bytes * 8 * S // capacity_bps)
