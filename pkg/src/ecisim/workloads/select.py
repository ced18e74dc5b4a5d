"""SELECT * WHERE a > X AND b < Y, offloaded to the memory side or run on the CPU.

Offload: a pipelined scanner streams rows out of FPGA DRAM, pushes matches
into a bounded result FIFO and stalls when it is full. Each CPU thread
blocks on one read of the FIFO address at a time (a ReadShared round trip);
the FPGA answers from the FIFO, first come first served, over a link that
carries one line per ``serialize_ns``.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..errors import WriteUnderReadOnlySubset
from .costmodel import DEFAULT, CostModel
from .des import EventLoop, Server
from .tables import select_predicate

HIST_BINS_NS = (0, 250, 500, 1000, 2000, 4000, 8000, 16000, float("inf"))


@dataclass
class ScanResult:
    rows: np.ndarray  # matching row indices in delivery order
    threads_of: np.ndarray  # which thread received each row
    elapsed_ns: float
    scanned: int
    stats: Dict[str, object] = field(default_factory=dict)

    @property
    def scan_rate(self) -> float:
        return self.scanned / (self.elapsed_ns * 1e-9)

    @property
    def results_rate(self) -> float:
        return len(self.rows) / (self.elapsed_ns * 1e-9)


def latency_histogram(latencies) -> Dict[str, int]:
    counts, _ = np.histogram(np.asarray(latencies, dtype=float), bins=np.array(HIST_BINS_NS))
    labels = [f"<{int(hi)}ns" if hi != float("inf") else f">={int(lo)}ns"
              for lo, hi in zip(HIST_BINS_NS, HIST_BINS_NS[1:])]
    return dict(zip(labels, map(int, counts)))


class ReadOnlyFifo:
    """The CPU's view of the result FIFO: reads only."""

    def write(self, *_):
        raise WriteUnderReadOnlySubset("the result FIFO is mapped under a read-only subset")


def offload_stream(match_idx: np.ndarray, total_rows: int, threads: int, model: CostModel,
                   ready_ns: np.ndarray = None, fifo_depth: int = 64) -> ScanResult:
    """Simulate the FIFO pipeline for a precomputed match list.

    ``ready_ns`` optionally gives the time each row's filter verdict is
    ready (compute-heavy filters); by default a row is decided as soon as
    DRAM delivers it. Results leave the filter in row order.
    """
    loop = EventLoop()
    link = Server(loop, model.serialize_ns)
    dt = 1e9 / model.dram_rows_s
    lat = model.link_latency_ns
    if ready_ns is None:
        ready = (match_idx + 1) * dt
        scan_end_free = total_rows * dt
    else:
        in_order = np.maximum.accumulate(np.maximum(ready_ns, (np.arange(total_rows) + 1) * dt))
        ready = in_order[match_idx]
        scan_end_free = float(in_order[-1]) if total_rows else 0.0
    n = len(match_idx)
    fifo = deque()
    waiting = deque()
    out_rows: List[int] = []
    out_threads: List[int] = []
    latencies: List[float] = []
    issued = {}
    st = {"k": 0, "stall_shift": 0.0, "stalled": False, "done": False, "end": 0.0,
          "last": 0.0, "requests": 0, "ends": 0}

    def schedule_produce():
        k = st["k"]
        if k < n:
            loop.at(ready[k] + st["stall_shift"], produce)
        else:
            st["end"] = max(loop.now, scan_end_free + st["stall_shift"])
            loop.at(st["end"], finish)

    def produce():
        k = st["k"]
        st["k"] += 1
        if waiting:
            serve(waiting.popleft(), k)
        else:
            fifo.append(k)
        if len(fifo) >= fifo_depth:
            st["stalled"] = True
            st["stalled_at"] = loop.now
        else:
            schedule_produce()

    def finish():
        st["done"] = True
        while waiting:
            reply_end(waiting.popleft())

    def serve(t, k):
        arrive = link.start() + lat
        loop.at(arrive, deliver, t, k)

    def reply_end(t):
        st["ends"] += 1
        loop.at(link.start() + lat, lambda: st.__setitem__("last", max(st["last"], loop.now)))

    def request(t):
        st["requests"] += 1
        if fifo:
            serve(t, fifo.popleft())
            if st["stalled"]:
                st["stalled"] = False
                st["stall_shift"] += loop.now - st["stalled_at"]
                schedule_produce()
        elif st["done"]:
            reply_end(t)
        else:
            waiting.append(t)

    def deliver(t, k):
        out_rows.append(int(match_idx[k]))
        out_threads.append(t)
        latencies.append(loop.now - issued[t])
        st["last"] = max(st["last"], loop.now)
        issue(t)

    def issue(t):
        issued[t] = loop.now
        loop.after(lat, request, t)

    for t in range(threads):
        issue(t)
    schedule_produce()
    loop.run()
    elapsed = max(st["end"], st["last"])
    stats = {
        "requests": st["requests"],
        "messages": 2 * st["requests"],
        "dram_bytes": total_rows * model.line_bytes,
        "link_bytes": (len(out_rows) + st["ends"]) * model.line_bytes,
        "fifo_stall_ns": st["stall_shift"],
        "latency_histogram": latency_histogram(latencies),
        "events": loop.events,
    }
    return ScanResult(np.array(out_rows, dtype=np.int64), np.array(out_threads, dtype=np.int64),
                      elapsed, total_rows, stats)


def select_scan(table: np.ndarray, x: int = 0, y: int = 0, threads: int = 16,
                model: CostModel = DEFAULT, fifo_depth: int = 64) -> ScanResult:
    match_idx = np.flatnonzero(select_predicate(table, x, y))
    res = offload_stream(match_idx, len(table), threads, model, fifo_depth=fifo_depth)
    res.stats.update(scan_rate_rows_s=res.scan_rate, results_s=res.results_rate,
                     selectivity=len(match_idx) / max(len(table), 1), threads=threads)
    return res


def cpu_stream(costs_ns: np.ndarray, matches: np.ndarray, threads: int, model: CostModel) -> ScanResult:
    """CPU-local scan: threads take rows in turn, each row is a DRAM line load then compute.

    ``costs_ns`` is the per-row compute time. DRAM is one shared server.
    """
    loop = EventLoop()
    dram = Server(loop, 1e9 / model.cpu_dram_rows_s)
    total = len(costs_ns)
    nxt = {"row": 0, "last": 0.0}
    out_rows, out_threads = [], []

    def take(t):
        r = nxt["row"]
        if r >= total:
            nxt["last"] = max(nxt["last"], loop.now)
            return
        nxt["row"] += 1
        loaded = dram.start()
        loop.at(loaded + costs_ns[r], done, t, r)

    def done(t, r):
        if matches[r]:
            out_rows.append(r)
            out_threads.append(t)
        take(t)

    for t in range(threads):
        take(t)
    loop.run()
    elapsed = max(nxt["last"], loop.now)
    stats = {"dram_bytes": total * model.line_bytes, "link_bytes": 0, "events": loop.events}
    return ScanResult(np.array(out_rows, dtype=np.int64), np.array(out_threads, dtype=np.int64),
                      elapsed, total, stats)


def cpu_select_scan(table: np.ndarray, x: int = 0, y: int = 0, threads: int = 16,
                    model: CostModel = DEFAULT) -> ScanResult:
    matches = select_predicate(table, x, y)
    res = cpu_stream(np.full(len(table), model.cpu_scan_ns_per_row), matches, threads, model)
    res.stats.update(scan_rate_rows_s=res.scan_rate, results_s=res.results_rate, threads=threads)
    return res
