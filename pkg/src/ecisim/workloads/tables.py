"""Fixed 128-byte record layouts and seeded table builders."""

from typing import Tuple

import numpy as np

ROW_DTYPE = np.dtype([("a", "<i8"), ("b", "<i8"), ("text", "S62"), ("pad", "V50")])
KV_DTYPE = np.dtype([("key", "<u8"), ("value", "V112"), ("next", "<i8")])
assert ROW_DTYPE.itemsize == 128 and KV_DTYPE.itemsize == 128

NIL = -1
DEFAULT_ROWS = 51_200
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class KeyNotFound(KeyError):
    def __init__(self, key, hops):
        super().__init__(f"key {key:#x} not found after {hops} hops")
        self.key = key
        self.hops = hops


def select_table(rows: int, selectivity: float, x: int = 0, y: int = 0, seed: int = 0) -> np.ndarray:
    """Rows where exactly round(selectivity * rows) satisfy ``a > x and b < y``."""
    rng = np.random.default_rng(seed)
    t = np.zeros(rows, dtype=ROW_DTYPE)
    hits = np.zeros(rows, dtype=bool)
    hits[rng.permutation(rows)[:int(round(selectivity * rows))]] = True
    n_hit = int(hits.sum())
    t["a"][hits] = x + 1 + rng.integers(0, 1_000_000, n_hit)
    t["b"][hits] = y - 1 - rng.integers(0, 1_000_000, n_hit)
    miss = ~hits
    n_miss = rows - n_hit
    # each miss fails at least one conjunct, chosen at random
    fail_a = rng.random(n_miss) < 0.5
    a = x + 1 + rng.integers(0, 1_000_000, n_miss)
    b = y - 1 - rng.integers(0, 1_000_000, n_miss)
    a[fail_a] = x - rng.integers(0, 1_000_000, fail_a.sum())
    b[~fail_a] = y + rng.integers(0, 1_000_000, (~fail_a).sum())
    t["a"][miss] = a
    t["b"][miss] = b
    return t


def select_predicate(table: np.ndarray, x: int = 0, y: int = 0) -> np.ndarray:
    return (table["a"] > x) & (table["b"] < y)


def hash64(keys, bits: int, seed: int = 0):
    """Seeded 64-bit multiplicative hash; top ``bits`` bits pick the bucket."""
    k = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = (k ^ np.uint64(seed)) * _GOLDEN
    return (h >> np.uint64(64 - bits)).astype(np.int64) if bits else np.zeros_like(k, dtype=np.int64)


class KvStore:
    """Hash table with separate chaining; every bucket has exactly ``chain`` entries."""

    def __init__(self, buckets: int, chain: int, seed: int = 0):
        if buckets & (buckets - 1):
            raise ValueError("bucket count must be a power of two")
        self.bits = buckets.bit_length() - 1
        self.buckets = buckets
        self.chain = chain
        self.seed = seed
        rng = np.random.default_rng(seed)
        need = buckets * chain
        while True:
            cand = np.unique(rng.integers(1, 2**63, size=need * 4, dtype=np.uint64))
            b = hash64(cand, self.bits, seed)
            order = np.argsort(b, kind="stable")
            b_sorted = b[order]
            first = np.searchsorted(b_sorted, np.arange(buckets))
            counts = np.bincount(b_sorted, minlength=buckets)
            if counts.min() >= chain:
                break
        pick = (first[:, None] + np.arange(chain)[None, :]).ravel()
        keys = cand[order][pick]
        self.entries = np.zeros(need, dtype=KV_DTYPE)
        self.entries["key"] = keys
        vals = rng.integers(0, 256, size=(need, 112), dtype=np.uint8)
        self.entries["value"] = vals.view("V112").ravel()
        nxt = np.arange(need, dtype=np.int64) + 1
        nxt[chain - 1::chain] = NIL
        self.entries["next"] = nxt
        self.heads = np.arange(buckets, dtype=np.int64) * chain

    def tail_keys(self) -> np.ndarray:
        """The last key of every chain; looking one up walks the whole chain."""
        return self.entries["key"][self.chain - 1::self.chain]

    def lookup(self, key: int) -> Tuple[bytes, int]:
        """(value, hops) for ``key``; raises KeyNotFound when the chain runs out."""
        b = int(hash64([key], self.bits, self.seed)[0])
        idx = int(self.heads[b])
        hops = 0
        keys = self.entries["key"]
        nxt = self.entries["next"]
        while idx != NIL:
            hops += 1
            if int(keys[idx]) == key:
                return bytes(self.entries["value"][idx]), hops
            idx = int(nxt[idx])
        raise KeyNotFound(key, hops)
