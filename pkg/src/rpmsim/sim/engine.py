"""Event loop: a binary heap ordered by (time, insertion order)."""

from __future__ import annotations

import heapq


class SimulationError(RuntimeError):
    """Engine contract violation (scheduling into the past, empty dequeue, ...)."""


class Simulator:
    __slots__ = ("now", "_heap", "_seq", "dispatched")

    def __init__(self):
        self.now = 0
        self._heap = []
        self._seq = 0
        self.dispatched = 0

    def at(self, t, fn, arg=None):
        if t < self.now:
            raise SimulationError(f"event scheduled in the past: {t} < {self.now}")
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, fn, arg))

    def after(self, delay, fn, arg=None):
        if delay < 0:
            raise SimulationError(f"negative delay {delay}")
        self._seq += 1
        heapq.heappush(self._heap, (self.now + delay, self._seq, fn, arg))

    def pending(self):
        return len(self._heap)

    def pending_args(self):
        return [ev[3] for ev in self._heap]

    def run(self, until):
        heap = self._heap
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= until:
            t, _, fn, arg = pop(heap)
            self.now = t
            fn(arg)
            n += 1
        self.dispatched += n
        if until > self.now:
            self.now = until
        return n
