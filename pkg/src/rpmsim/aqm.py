"""CoDel controller evaluated at dequeue time.

The controller only decides; what a ``SIGNAL`` does to the packet (CE mark,
drop, or a reverse-path register update) is up to the port that owns it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .units import MS

__all__ = ["Decision", "CodelState", "control_law", "codel_evaluate", "DEFAULT_TARGET", "DEFAULT_INTERVAL"]

DEFAULT_TARGET = 1 * MS
DEFAULT_INTERVAL = 20 * MS


class Decision(Enum):
    FORWARD = "forward"
    SIGNAL = "signal"


def control_law(drop_next: int, count: int, interval: int) -> int:
    """Next signal time: drop_next + interval / sqrt(count), rounded half up to ns."""
    if count < 1:
        raise ValueError(f"control_law needs count >= 1, got {count}")
    return drop_next + math.floor(interval / math.sqrt(count) + 0.5)


@dataclass
class CodelState:
    target: int = DEFAULT_TARGET
    interval: int = DEFAULT_INTERVAL
    first_above_time: int | None = None
    drop_next: int = 0
    count: int = 0
    lastcount: int = 0
    in_dropping: bool = False

    def evaluate(self, sojourn: int, now: int) -> Decision:
        return codel_evaluate(self, sojourn, now)


def _ok_to_signal(st: CodelState, sojourn: int, now: int) -> bool:
    if sojourn < st.target:
        st.first_above_time = None
        return False
    if st.first_above_time is None:
        st.first_above_time = now + st.interval
        return False
    return now >= st.first_above_time


def codel_evaluate(st: CodelState, sojourn: int, now: int) -> Decision:
    """One CoDel decision for the packet just dequeued with the given sojourn.

    Marking variant: the packet is never consumed here, so the dropping
    state signals at most once per call and advances ``drop_next`` by the
    control law instead of looping over further packets.
    """
    ok = _ok_to_signal(st, sojourn, now)
    if st.in_dropping:
        if not ok:
            st.in_dropping = False
            return Decision.FORWARD
        if now >= st.drop_next:
            st.count += 1
            st.drop_next = control_law(st.drop_next, st.count, st.interval)
            return Decision.SIGNAL
        return Decision.FORWARD
    if ok:
        delta = st.count - st.lastcount
        if delta > 1 and now - st.drop_next < 16 * st.interval:
            st.count = delta
        else:
            st.count = 1
        st.lastcount = st.count
        st.drop_next = control_law(now, st.count, st.interval)
        st.in_dropping = True
        return Decision.SIGNAL
    return Decision.FORWARD
