"""Regex filter over the 62-byte text column, offloaded or on the CPU."""

from typing import List, Sequence

import numpy as np

from .costmodel import DEFAULT, CostModel
from .select import ScanResult, cpu_stream, offload_stream
from .tables import ROW_DTYPE
from .tinyregex import BacktrackMatcher, Dfa, parse, sample_match, text_columns

FILLER = b"abcdefghijklmnopqrstuvwxyz0123456789 "


def regex_table(rows: int, patterns: Sequence[str] = (), selectivity: float = 0.0,
                seed: int = 0, width: int = 62) -> np.ndarray:
    """Random text rows; about ``selectivity`` of them get a planted match of a pattern."""
    rng = np.random.default_rng(seed)
    t = np.zeros(rows, dtype=ROW_DTYPE)
    alphabet = np.frombuffer(FILLER, dtype=np.uint8)
    lengths = rng.integers(width // 2, width + 1, rows)
    raw = alphabet[rng.integers(0, len(alphabet), (rows, width))]
    raw[np.arange(width)[None, :] >= lengths[:, None]] = 0
    if patterns and selectivity > 0:
        planted = rng.permutation(rows)[:int(round(selectivity * rows))]
        parsed = [parse(p) for p in patterns]
        for r in planted:
            p = parsed[int(rng.integers(0, len(parsed)))]
            s = sample_match(p, rng, alphabet=FILLER)[:width]
            n = int(lengths[r])
            if p.anchored_start:
                at = 0
            elif p.anchored_end:
                at = n - len(s)
            else:
                at = int(rng.integers(0, max(n - len(s), 0) + 1))
            at = max(at, 0)
            row = bytearray(raw[r, :n].tobytes())
            row[at:at + len(s)] = s
            row = bytes(row[:width]).replace(b"\x00", b" ")
            raw[r, :] = 0
            raw[r, :len(row)] = np.frombuffer(row, dtype=np.uint8)
    t["text"] = raw.view("S62").ravel() if width == 62 else raw.tobytes()
    return t


def operator_matches(pattern: str, table: np.ndarray):
    """(match flags, characters examined) as the hardware engines would compute them."""
    mat, lengths = text_columns(table["text"])
    return Dfa(pattern).run(mat, lengths)


def reference_matches(pattern: str, table: np.ndarray):
    """(match flags, backtracking steps) from the CPU reference matcher."""
    m = BacktrackMatcher(pattern)
    flags = np.zeros(len(table), dtype=bool)
    steps = np.zeros(len(table), dtype=np.int64)
    for i, text in enumerate(table["text"]):
        before = m.steps
        flags[i] = m.search(bytes(text))
        steps[i] = m.steps - before
    return flags, steps


def engine_ready_times(examined: np.ndarray, model: CostModel, units: int = None) -> np.ndarray:
    """When each row's verdict is ready: rows go round-robin to ``units`` engines,
    each taking one clock per character examined after DRAM hands it the row."""
    units = units or model.regex_units
    dt = 1e9 / model.dram_rows_s
    cycle = 1e9 / model.fpga_clock_hz
    arrive = (np.arange(len(examined)) + 1) * dt
    ready = np.empty(len(examined))
    busy = np.zeros(units)
    for i, n in enumerate(examined):
        u = i % units
        start = arrive[i] if arrive[i] > busy[u] else busy[u]
        busy[u] = start + max(int(n), 1) * cycle
        ready[i] = busy[u]
    return ready


def regex_scan(pattern: str, table: np.ndarray, threads: int = 16, model: CostModel = DEFAULT,
               units: int = None) -> ScanResult:
    flags, examined = operator_matches(pattern, table)
    idx = np.flatnonzero(flags)
    res = offload_stream(idx, len(table), threads, model, ready_ns=engine_ready_times(examined, model, units))
    mean_chars = float(examined.mean()) if len(examined) else 0.0
    res.stats.update(scan_rate_rows_s=res.scan_rate, results_s=res.results_rate, threads=threads,
                     selectivity=len(idx) / max(len(table), 1), mean_chars=mean_chars,
                     model_scan_rate=model.regex_scan_rate(len(idx) / max(len(table), 1), threads, mean_chars))
    return res


def cpu_regex_scan(pattern: str, table: np.ndarray, threads: int = 16, model: CostModel = DEFAULT,
                   steps: np.ndarray = None, flags: np.ndarray = None) -> ScanResult:
    if steps is None or flags is None:
        flags, steps = reference_matches(pattern, table)
    res = cpu_stream(steps * model.cpu_ns_per_step, flags, threads, model)
    res.stats.update(scan_rate_rows_s=res.scan_rate, results_s=res.results_rate, threads=threads,
                     mean_steps=float(steps.mean()) if len(steps) else 0.0)
    return res


def random_patterns(count: int, seed: int = 0) -> List[str]:
    """Patterns in the supported dialect, built from the filler alphabet."""
    rng = np.random.default_rng(seed)
    letters = "abcdefghijklmnopqrstuvwxyz"
    atoms = [lambda: letters[rng.integers(26)], lambda: ".", lambda: r"\d", lambda: r"\w", lambda: r"\s",
             lambda: "[" + "".join(sorted(set(rng.choice(list(letters), 3)))) + "]",
             lambda: "[^" + "".join(sorted(set(rng.choice(list(letters), 2)))) + "]",
             lambda: "[a-" + letters[rng.integers(3, 26)] + "]"]
    out = []
    for _ in range(count):
        parts = []
        if rng.random() < 0.2:
            parts.append("^")
        for _ in range(int(rng.integers(2, 6))):
            a = atoms[0]() if rng.random() < 0.5 else atoms[int(rng.integers(len(atoms)))]()
            q = rng.choice(["", "", "", "*", "+", "?"])
            parts.append(a + q)
        if rng.random() < 0.2:
            parts.append("$")
        out.append("".join(parts))
    return out
