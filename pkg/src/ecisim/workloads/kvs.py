"""Pointer-chasing key-value lookups, offloaded to parallel chasers or run on the CPU.

Each CPU thread blocks on one lookup at a time. Offloaded, the key travels
in the request address; a dispatcher hands it to a free chaser unit, which
walks the bucket's chain with one dependent DRAM access per hop and sends
the value back as one line.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .costmodel import DEFAULT, CostModel
from .des import EventLoop, Server
from .select import latency_histogram
from .tables import KvStore


@dataclass
class KvResult:
    lookups: int
    elapsed_ns: float
    hops: int
    values_ok: bool
    stats: Dict[str, object] = field(default_factory=dict)

    @property
    def keys_per_s(self) -> float:
        return self.lookups / (self.elapsed_ns * 1e-9)


def kv_offload(store: KvStore, threads: int, lookups: int, model: CostModel = DEFAULT,
               units: int = None, seed: int = 0, warmup: float = 0.1) -> KvResult:
    """Simulate ``lookups`` lookups of chain-tail keys (so every walk is full length).

    Throughput is measured after the first ``warmup`` fraction of completions.
    """
    units = units or model.kvs_units
    rng = np.random.default_rng(seed)
    tails = store.tail_keys()
    expected = {int(k): None for k in tails}
    keys = tails[rng.integers(0, len(tails), lookups)]
    loop = EventLoop()
    link = Server(loop, model.serialize_ns)
    lat = model.link_latency_ns
    free_units = units
    queue = deque()
    st = {"next": 0, "hops": 0, "ok": True, "done": 0}
    completions: List[float] = []
    latencies: List[float] = []
    issued = {}

    def issue(t):
        i = st["next"]
        if i >= lookups:
            return
        st["next"] += 1
        issued[t] = loop.now
        loop.after(lat, arrive, t, int(keys[i]))

    def arrive(t, key):
        nonlocal free_units
        if free_units:
            free_units -= 1
            chase(t, key)
        else:
            queue.append((t, key))

    def chase(t, key):
        value, hops = store.lookup(key)
        st["hops"] += hops
        if expected.get(key) is None:
            expected[key] = value
        elif expected[key] != value:
            st["ok"] = False
        loop.after(hops * model.dram_latency_ns, respond, t)

    def respond(t):
        nonlocal free_units
        loop.at(link.start() + lat, complete, t)
        if queue:
            chase(*queue.popleft())
        else:
            free_units += 1

    def complete(t):
        st["done"] += 1
        completions.append(loop.now)
        latencies.append(loop.now - issued[t])
        issue(t)

    for t in range(threads):
        issue(t)
    loop.run()
    skip = int(len(completions) * warmup)
    window = completions[-1] - completions[skip - 1] if skip else completions[-1]
    measured = len(completions) - skip
    # reference values straight from the entries array
    ref = {int(k): bytes(v) for k, v in zip(store.entries["key"], store.entries["value"])}
    ok = st["ok"] and all(ref[k] == v for k, v in expected.items() if v is not None)
    stats = {"dram_bytes": st["hops"] * model.line_bytes, "link_bytes": lookups * model.line_bytes,
             "messages": 2 * lookups, "latency_histogram": latency_histogram(latencies),
             "chain": store.chain, "threads": threads, "units": units}
    res = KvResult(measured, window, st["hops"], ok, stats)
    res.stats["keys_s"] = res.keys_per_s
    res.stats["dram_bytes_s"] = res.keys_per_s * store.chain * model.line_bytes
    return res


def kv_cpu(store: KvStore, threads: int, lookups: int, model: CostModel = DEFAULT, seed: int = 0) -> KvResult:
    """CPU-local chase: every hop is one dependent local DRAM access per thread."""
    rng = np.random.default_rng(seed)
    tails = store.tail_keys()
    keys = tails[rng.integers(0, len(tails), lookups)]
    per_thread = np.array_split(keys, threads)
    finish = 0.0
    hops_total = 0
    for chunk in per_thread:
        t = 0.0
        for k in chunk:
            _, hops = store.lookup(int(k))
            hops_total += hops
            t += hops * model.cpu_dram_latency_ns
        finish = max(finish, t)
    res = KvResult(lookups, finish, hops_total, True,
                   {"dram_bytes": hops_total * model.line_bytes, "link_bytes": 0})
    res.stats["keys_s"] = res.keys_per_s
    return res
