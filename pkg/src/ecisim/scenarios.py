"""Build agents from a scenario and run it to completion."""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .config import Scenario
from .errors import EciError
from .home import HomeAgent
from .nfa import check_all
from .remote import RemoteAgent
from .specs import builtin_automata
from .subsetting import StatelessHome, TwoStateHome
from .system import RandomDriver, System
from .transport import Link, VcMap

OK, USAGE, VIOLATION, DEADLOCK, STATE_SPACE = 0, 1, 2, 3, 4


@dataclass
class RunOutcome:
    code: int
    stats: Dict[str, object] = field(default_factory=dict)
    records: list = field(default_factory=list)


def build_system(sc: Scenario, seed: int, record: bool = True) -> System:
    home_kind = sc.choice("home", "subset", ("full", "stateless", "two_state"))
    if home_kind == "full":
        home = HomeAgent(sc.strategy(), home_caches=sc.flag("home", "caches"))
    elif home_kind == "stateless":
        home = StatelessHome()
    else:
        home = TwoStateHome()
    cap = sc.integer("remote", "capacity", 0) or None
    remote = RemoteAgent(capacity=cap, read_only=sc.get("remote", "subset").startswith("read_only"))
    credits = sc.integer("transport", "credits", 1)
    vc_map = VcMap.single_vc(credits) if sc.get("transport", "vc_map") == "single_vc" else VcMap.class_separated(credits)
    link = Link(vc_map, reorder=sc.get("transport", "reorder"), seed=seed,
                latency_ns=sc.number("transport", "latency_ns", 0))
    return System(home, remote, link, record=record)


def _ops_for(sc: Scenario) -> Dict[str, int]:
    w = {"rr": 4, "rw": 2, "re": 1, "hr": 2, "hw": 1, "he": 1}
    if sc.get("remote", "subset").startswith("read_only"):
        w["rw"] = 0
    if sc.get("home", "subset") == "stateless":
        w["hw"] = 0
    return w


def _finish(sysm: System, stats: Dict[str, object], sc: Optional[Scenario] = None) -> RunOutcome:
    """Drain, look for deadlock and violations, run the builtin checker."""
    try:
        sysm.drain()
    except EciError as e:
        sysm.ghost.violations.append(f"{type(e).__name__}: {e}")
    code = OK
    if not sysm.idle():
        rep = sysm.detect_deadlock()
        stats["deadlock"] = rep.to_dict() if rep else {"cycle": [], "in_flight": sysm.link.in_flight()}
        code = DEADLOCK
    stats["violations"] = list(sysm.ghost.violations)
    stats["messages"] = sysm.sent
    if sysm.record and code == OK:
        home_sub, remote_sub = sc.subsets() if sc is not None else (None, None)
        found = check_all(builtin_automata((remote_sub, home_sub) if sc is not None else None), sysm.records)
        stats["checker_violations"] = [v.to_json() for v in found]
        if found:
            code = VIOLATION
    if sysm.ghost.violations and code == OK:
        code = VIOLATION
    return RunOutcome(code, stats, sysm.records)


def run_random(sc: Scenario, seed: int, record: bool = True) -> RunOutcome:
    sysm = build_system(sc, seed, record)
    drv = RandomDriver(sysm, range(sc.integer("random", "lines", 0)), seed=seed,
                       p_deliver=sc.number("random", "p_deliver", 0, 1), weights=_ops_for(sc))
    stats: Dict[str, object] = {"kind": "random", "seed": seed}
    if not drv.lines:
        return RunOutcome(OK, dict(stats, messages=0, violations=[]), [])
    for _ in range(sc.integer("random", "steps", 0)):
        try:
            drv.step()
        except EciError as e:
            sysm.ghost.violations.append(f"{type(e).__name__}: {e}")
            break
        if sysm.link.in_flight() and not sysm.consumable():
            rep = sysm.detect_deadlock()
            if rep is not None:
                stats.update(deadlock=rep.to_dict(), messages=sysm.sent, violations=list(sysm.ghost.violations))
                return RunOutcome(DEADLOCK, stats, sysm.records)
    return _finish(sysm, stats, sc)


def replay_results(sc: Scenario, seed: int, rows, record: bool = True) -> RunOutcome:
    """Carry delivered result rows over the protocol: one ReadShared per result line.

    Result ``k`` sits in its own line whose value is ``row + 1``; the remote
    reads it and later drops it (a clean voluntary downgrade) when its small
    cache fills, the way a CPU consumes a result buffer.
    """
    sysm = build_system(sc, seed, record)
    sysm.preload({k: int(r) + 1 for k, r in enumerate(rows)})
    stats: Dict[str, object] = {}
    got = []
    for k in range(len(rows)):
        res = sysm.remote_read(k)
        if not res.hit:
            sysm.drain()
        got.append(sysm.remote.line(k).data - 1)
    out = _finish(sysm, stats, sc)
    out.stats["results_delivered_ok"] = got == [int(r) for r in rows]
    if not out.stats["results_delivered_ok"] and out.code == OK:
        out.code = VIOLATION
    return out


def run_workload(sc: Scenario, seed: int, record: bool = True) -> RunOutcome:
    from .workloads import kvs, locality, regex_filter, select, tables

    kind = sc.kind
    if kind == "select":
        rows = sc.integer("select", "rows", 1)
        sel = sc.number("select", "selectivity", 0, 1)
        threads = sc.integer("select", "threads", 1)
        table = tables.select_table(rows, sel, seed=seed)
        res = select.select_scan(table, threads=threads)
        cpu = select.cpu_select_scan(table, threads=threads)
        stats = dict(res.stats, cpu_scan_rate_rows_s=cpu.scan_rate, cpu_results_s=cpu.results_rate)
        delivered = res.rows
    elif kind == "regex":
        rows = sc.integer("regex", "rows", 1)
        pattern = sc.get("regex", "pattern")
        table = regex_filter.regex_table(rows, [pattern], sc.number("regex", "selectivity", 0, 1), seed=seed)
        threads = sc.integer("regex", "threads", 1)
        res = regex_filter.regex_scan(pattern, table, threads)
        stats = dict(res.stats, pattern=pattern)
        delivered = res.rows
    elif kind == "kv":
        store = tables.KvStore(sc.integer("kv", "buckets", 1), sc.integer("kv", "chain", 1), seed=seed)
        res = kvs.kv_offload(store, sc.integer("kv", "threads", 1), sc.integer("kv", "lookups", 1), seed=seed)
        cpu = kvs.kv_cpu(store, sc.integer("kv", "threads", 1), sc.integer("kv", "lookups", 1), seed=seed)
        stats = dict(res.stats, values_ok=res.values_ok, cpu_keys_s=cpu.keys_per_s)
        delivered = []
    else:
        size = sc.integer("locality", "cache_bytes", 128)
        ways = sc.integer("locality", "ways", 1)
        res = locality.locality_run(sc.integer("locality", "reuse", 1), sc.integer("locality", "results", 1),
                                    sc.integer("locality", "stride", 1), locality.l1_cache(size, ways))
        stats = dict(res.stats, values_ok=res.values_ok)
        delivered = []
    stats = {"kind": kind, "seed": seed, **stats}
    code = OK
    if kind in ("kv", "locality") and not stats["values_ok"]:
        code = VIOLATION
    out = RunOutcome(code, stats, [])
    if delivered is not None and len(delivered):
        rep = replay_results(sc, seed, delivered, record)
        out.stats["protocol"] = rep.stats
        out.records = rep.records
        out.code = max(out.code, rep.code)
    return _jsonable(out)


def _jsonable(out: RunOutcome) -> RunOutcome:
    def conv(v):
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v
    out.stats = conv(out.stats)
    return out


def run_scenario(sc: Scenario, seed: Optional[int] = None, record: bool = True) -> RunOutcome:
    seed = sc.seed if seed is None else seed
    if sc.kind == "random":
        return _jsonable(run_random(sc, seed, record))
    return run_workload(sc, seed, record)
