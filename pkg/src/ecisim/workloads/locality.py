"""Temporal reuse of operator results through the remote cache.

The result stream is laid out as consecutive lines in home memory. While
consuming result ``n`` the CPU also re-reads ``n - D``, ``n - 2D``, ... so
each result is read ``reuse`` times in total. Reads go through a real
read-only remote agent talking to a stateless home, so every miss is one
ReadShared on the link and every re-read that stays resident is free.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from ..remote import LruPolicy, RemoteAgent, SetAssociativeLru
from ..subsetting import StatelessHome
from ..system import System
from .costmodel import DEFAULT, CostModel

L1_BYTES = 32 * 1024
L1_WAYS = 8
L1_HIT_NS = 1.0


@dataclass
class LocalityResult:
    results: int
    reuse: int
    stride: int
    reads: int
    interconnect_fetches: int
    hits: int
    values_ok: bool
    stats: Dict[str, object] = field(default_factory=dict)

    @property
    def miss_rate(self) -> float:
        return self.interconnect_fetches / self.reads if self.reads else 0.0


def access_order(results: int, reuse: int, stride: int = 1) -> Iterator[int]:
    for n in range(results):
        for j in range(reuse):
            m = n - j * stride
            if m < 0:
                break
            yield m


def total_reads(results: int, reuse: int, stride: int = 1) -> int:
    n = np.arange(results)
    return int(np.minimum(reuse, n // stride + 1).sum())


def analytic_fetches(results: int, reuse: int, stride: int, capacity_lines: int) -> Optional[int]:
    """Exact LRU fetch count when the reuse window fits, else None.

    Between two reads of the same line the pattern touches ``stride * reuse``
    other distinct lines (fewer near the start), so a fully associative LRU
    of ``capacity_lines`` keeps every line while it is still being re-read
    if that number is below the capacity. Each result is then fetched once.
    """
    if reuse == 1 or stride * reuse <= capacity_lines - 1:
        return results
    return None


def l1_cache(size_bytes: int = L1_BYTES, ways: int = L1_WAYS, line_bytes: int = 128):
    return SetAssociativeLru.from_size(size_bytes, ways, line_bytes)


def locality_run(reuse: int, results: int = 4096, stride: int = 1, cache=None,
                 values: Sequence[int] = None, model: CostModel = DEFAULT) -> LocalityResult:
    """Drive the re-read pattern and count link fetches.

    ``cache`` is an eviction policy (default: the L1 assumption, 32 KiB 8-way).
    ``values`` are the result payloads, e.g. matching row indices.
    """
    cache = cache if cache is not None else l1_cache(line_bytes=model.line_bytes)
    if values is None:
        values = range(1, results + 1)
    expected = [int(v) for v in values][:results]
    if len(expected) < results:
        raise ValueError("fewer values than results")
    home = StatelessHome()
    remote = RemoteAgent(eviction=cache, read_only=True)
    sysm = System(home, remote, record=False)
    sysm.preload(dict(enumerate(expected)))
    reads = hits = 0
    ok = True
    for line in access_order(results, reuse, stride):
        reads += 1
        res = sysm.remote_read(line)
        if res.hit:
            hits += 1
            got = res.value
        else:
            sysm.drain()
            got = remote.line(line).data
        ok = ok and got == expected[line]
    ok = ok and not sysm.ghost.violations
    fetches = home.stats["served"]
    elapsed = fetches * model.round_trip_ns + hits * L1_HIT_NS
    out = LocalityResult(results, reuse, stride, reads, fetches, hits, ok)
    out.stats = {
        "interconnect_fetches": fetches, "hits": hits, "reads": reads, "miss_rate": out.miss_rate,
        "evictions": remote.stats["evictions"], "link_bytes": fetches * model.line_bytes,
        "reads_s_one_thread": reads / (elapsed * 1e-9) if elapsed else 0.0,
        "analytic_fetches": analytic_fetches(results, reuse, stride, cache.capacity),
        "cache_lines": cache.capacity,
    }
    return out


def locality_sweep(reuses: Sequence[int] = (1, 2, 4, 8, 16, 32, 64), results: int = 4096,
                   stride: int = 1, cache_factory=l1_cache) -> List[LocalityResult]:
    return [locality_run(r, results, stride, cache_factory()) for r in reuses]


def fully_associative(lines: int) -> LruPolicy:
    return LruPolicy(lines)
