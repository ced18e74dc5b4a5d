"""Minimal deterministic discrete-event loop."""

import heapq
import itertools
from typing import Callable


class EventLoop:
    """Events at equal times run in scheduling order."""

    def __init__(self):
        self.now = 0.0
        self._queue = []
        self._tie = itertools.count()
        self.events = 0

    def at(self, time: float, fn: Callable, *args):
        heapq.heappush(self._queue, (time, next(self._tie), fn, args))

    def after(self, delay: float, fn: Callable, *args):
        self.at(self.now + delay, fn, *args)

    def run(self, until: float = float("inf")):
        q = self._queue
        while q and q[0][0] <= until:
            t, _, fn, args = heapq.heappop(q)
            self.now = t
            self.events += 1
            fn(*args)
        return self.now


class Server:
    """A FIFO resource with a fixed service time per job (e.g. a link or DRAM port)."""

    def __init__(self, loop: EventLoop, service_ns: float):
        self.loop = loop
        self.service_ns = service_ns
        self.free_at = 0.0
        self.busy_ns = 0.0

    def start(self, ready: float = None) -> float:
        """Reserve the next slot at or after ``ready``; returns its completion time."""
        ready = self.loop.now if ready is None else ready
        begin = max(ready, self.free_at)
        self.free_at = begin + self.service_ns
        self.busy_ns += self.service_ns
        return self.free_at
