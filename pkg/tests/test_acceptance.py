"""The ten acceptance criteria, one test each, at their stated tolerances.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import itertools
import time

import numpy as np
import pytest

from ecisim.home import HomeAgent, HomeStrategy
from ecisim.modelcheck import model_check
from ecisim.nfa import check_all
from ecisim.protocol import CoherenceMessage, RequestKind, Role, message_rules, well_formed
from ecisim.remote import RemoteAgent
from ecisim.specs import FAULTS, builtin_automata, inject
from ecisim.subsetting import read_only_comparison
from ecisim.system import RandomDriver, System, healthy_run
from ecisim.trace import decode, encode, encode_jsonl, normalized
from ecisim.transport import Link, VcMap
from ecisim.workloads import DEFAULT, kvs, locality, regex_filter, select, tables

from test_protocol import MESSAGE_TABLE

K = RequestKind


def detail(request, text):
    request.node.user_properties.append(("detail", text))


# 1 ------------------------------------------------------------------------------

REPLY_DROPS = {
    "DG-S reply": dict(remote_factory=lambda: RemoteAgent(drop_replies=[K.HOME_DOWNGRADE_TO_SHARED])),
    "DG-I reply": dict(remote_factory=lambda: RemoteAgent(drop_replies=[K.HOME_DOWNGRADE_TO_INVALID])),
    "dirty-forward reply": dict(home_factory=lambda: HomeAgent(drop_forward_reply=True)),
    "RS reply": dict(home_factory=lambda: HomeAgent(drop_replies=[K.READ_SHARED])),
    "RE reply": dict(home_factory=lambda: HomeAgent(drop_replies=[K.READ_EXCLUSIVE])),
    "upgrade reply": dict(home_factory=lambda: HomeAgent(drop_replies=[K.UPGRADE_SHARED_TO_EXCLUSIVE])),
}


@pytest.mark.acceptance(1, "model check: 1 line, depth 20, safe in < 60 s; every reply drop caught")
def test_model_check_gate(request):
    t0 = time.perf_counter()
    res = model_check(lines=1, depth=20)
    elapsed = time.perf_counter() - t0
    detail(request, f"{res.states} states, {elapsed:.1f} s, {'closed' if res.complete else 'open'} at depth {res.depth}")
    assert res.ok, res.violation
    assert elapsed < 60
    caught = {name: model_check(lines=1, depth=20, **kw) for name, kw in REPLY_DROPS.items()}
    missed = [n for n, r in caught.items() if r.ok or not r.counterexample]
    detail(request, f"{len(caught) - len(missed)}/{len(caught)} mutants caught")
    assert not missed


# 2 ------------------------------------------------------------------------------

def _messages_follow_rules(records):
    """Second route: messages the agents really send obey the same rules."""
    for r in records:
        rule = message_rules(r.kind, r.dirty)
        if r.role is Role.REQUEST and r.payload != rule.request_payload:
            return False
        if r.role is Role.RESPONSE and (not rule.reply_required or (rule.reply_payload and not r.payload)):
            return False
        if r.payload != r.dirty:
            return False
    return True


@pytest.mark.acceptance(2, "message table: 7 kinds x dirty/clean exact, < 1 s")
def test_message_table(request):
    t0 = time.perf_counter()
    combos = list(itertools.product(K, (False, True)))
    assert len(combos) == len(MESSAGE_TABLE) == 14
    for kind, dirty in combos:
        r = message_rules(kind, dirty)
        assert (r.request_payload, r.reply_required, r.reply_payload) == MESSAGE_TABLE[(kind, dirty)]
        msg = CoherenceMessage(0, Role.REQUEST, kind, 0, 1 if r.request_payload else None, r.request_payload)
        assert well_formed(msg)
    elapsed = time.perf_counter() - t0
    detail(request, f"{elapsed * 1e3:.1f} ms")
    assert elapsed < 1.0
    assert all(_messages_follow_rules(healthy_run(seed, steps=150).records) for seed in range(50))


# 3 ------------------------------------------------------------------------------

def _schedule(seed, strategy):
    sysm = System(HomeAgent(strategy), RemoteAgent(capacity=2), Link(seed=seed))
    drv = RandomDriver(sysm, (0, 1), seed=seed, weights={"rr": 3, "rw": 1, "re": 1, "hr": 1, "hw": 3, "he": 1})
    drv.run(40)
    sysm.drain()
    return sysm, drv.schedule


@pytest.mark.acceptance(3, "hidden O: 1000 dirty-forward schedules identical, no store writes")
def test_hidden_o_invisible(request):
    exercised = seeds = hidden_writes = wbos_writes = 0
    for seed in itertools.count():
        if exercised == 1000:
            break
        seeds += 1
        hidden, sched_h = _schedule(seed, HomeStrategy.HIDDEN_O)
        wbos, sched_w = _schedule(seed, HomeStrategy.WRITE_BACK_ON_SHARE)
        assert sched_h == sched_w
        assert encode_jsonl(normalized(hidden.records)) == encode_jsonl(normalized(wbos.records)), seed
        assert not hidden.ghost.violations and not wbos.ghost.violations
        if hidden.home.stats["dirty_forwards"]:
            exercised += 1
        hidden_writes += hidden.home.stats["forward_store_writes"]
        wbos_writes += wbos.home.stats["forward_store_writes"]
    detail(request, f"{exercised} of {seeds} seeds hit the path; store writes on it: HiddenO {hidden_writes}, "
                    f"WriteBackOnShare {wbos_writes}")
    assert hidden_writes == 0 and wbos_writes > 0


# 4 ------------------------------------------------------------------------------

@pytest.mark.acceptance(4, "stateless home: 10k read-only requests Equal, 0 directory bytes")
def test_stateless_equivalence(request):
    verdict, full, lean = read_only_comparison(requests=10_000, seed=0)
    detail(request, f"{verdict}, {len(full.records)} messages, stateless directory {lean.home.directory_bytes()} B")
    assert verdict
    assert lean.home.directory_bytes() == 0 and lean.home.entries == {}
    assert full.home.directory_bytes() > 0
    assert not full.ghost.violations and not lean.ghost.violations


# 5 ------------------------------------------------------------------------------

@pytest.mark.acceptance(5, "deadlock: 10^6 one-credit steps clean; single-VC cycle reported")
def test_deadlock_freedom(request):
    steps = 0
    stalled_steps = 0
    for seed in range(10):
        sysm = System(HomeAgent(), RemoteAgent(capacity=3), Link(VcMap.class_separated(1), seed=seed), record=False)
        drv = RandomDriver(sysm, range(4), seed=seed)
        for _ in range(100_000):
            drv.step()
            steps += 1
            if sysm.stalled():
                stalled_steps += 1
            if sysm.link.in_flight() and not sysm.consumable():
                assert sysm.detect_deadlock() is None, seed
        sysm.drain()
        assert sysm.idle() and not sysm.ghost.violations
    detail(request, f"{steps} steps, {stalled_steps} with credit back-pressure")
    assert steps == 10**6 and stalled_steps > 0

    from ecisim.config import load_config
    from ecisim.scenarios import DEADLOCK, run_scenario
    out = run_scenario(load_config(None, "adversarial-single-vc"))
    assert out.code == DEADLOCK
    cycle = out.stats["deadlock"]["cycle"]
    detail(request, "single-VC cycle " + " -> ".join(f"{c['dir']}:{c['vc']}" for c in cycle))
    assert len(cycle) == 2


# 6 ------------------------------------------------------------------------------

@pytest.mark.acceptance(6, "SELECT: link-bound at 100%, DRAM-bound at <=10% with >=16 threads, crossover")
def test_select_crossover(request):
    t0 = time.perf_counter()
    dram = DEFAULT.dram_rows_s
    full = tables.select_table(51_200, 1.0, seed=0)
    sat = select.select_scan(full, threads=48)
    ratio = sat.scan_rate / dram
    assert ratio == pytest.approx(1 / 6, rel=0.05)
    worst = 1.0
    for sel in (0.0, 0.01, 0.1):
        t = tables.select_table(51_200, sel, seed=0)
        for threads in (16, 32, 48):
            r = select.select_scan(t, threads=threads).scan_rate / dram
            worst = min(worst, r)
            assert r == pytest.approx(1.0, rel=0.05), (sel, threads)
    lo = tables.select_table(51_200, 0.1, seed=0)
    off_lo = select.select_scan(lo, threads=16).results_rate
    cpu_lo = select.cpu_select_scan(lo, threads=16).results_rate
    off_hi = select.select_scan(full, threads=16).results_rate
    cpu_hi = select.cpu_select_scan(full, threads=16).results_rate
    elapsed = time.perf_counter() - t0
    detail(request, f"100%: {ratio:.4f} of DRAM; <=10%: >= {worst:.4f}; results/s offload vs CPU "
                    f"{off_lo / 1e6:.1f}M vs {cpu_lo / 1e6:.1f}M at 10%, {off_hi / 1e6:.1f}M vs {cpu_hi / 1e6:.1f}M at 100%; "
                    f"{elapsed:.1f} s")
    assert off_lo > cpu_lo and off_hi < cpu_hi
    assert elapsed < 30


# 7 ------------------------------------------------------------------------------

@pytest.mark.acceptance(7, "KVS: DES within 5% of model for L=1..128, offload <= CPU, 640 MB/s")
def test_kvs_negative(request):
    worst = 0.0
    for chain in (1, 2, 4, 8, 16, 32, 64, 128):
        store = tables.KvStore(256, chain, seed=chain)
        off = kvs.kv_offload(store, 48, 4000, seed=chain)
        cpu = kvs.kv_cpu(store, 48, 4000, seed=chain)
        model = DEFAULT.kvs_rate(chain, 48)
        err = abs(off.keys_per_s / model - 1)
        worst = max(worst, err)
        assert off.values_ok
        assert err < 0.05, (chain, off.keys_per_s, model)
        assert off.keys_per_s <= cpu.keys_per_s, chain
    # in the unit-bound regime throughput goes as 1/L
    assert DEFAULT.kvs_rate(64, 48) / DEFAULT.kvs_rate(128, 48) == pytest.approx(2.0, rel=0.05)
    unit = DEFAULT.unit_dram_bytes_s
    detail(request, f"worst DES/model gap {worst * 100:.2f}%, single unit {unit / 1e6:.0f} MB/s")
    assert unit == pytest.approx(640e6, rel=0.01)


# 8 ------------------------------------------------------------------------------

@pytest.mark.acceptance(8, "regex: operator == reference matcher, 10k rows x 20 patterns")
def test_regex_oracle(request):
    patterns = regex_filter.random_patterns(20, seed=0)
    table = regex_filter.regex_table(10_000, patterns, 0.1, seed=0)
    matched = 0
    for p in patterns:
        dfa, _ = regex_filter.operator_matches(p, table)
        ref, _ = regex_filter.reference_matches(p, table)
        assert np.array_equal(dfa, ref), p
        matched += int(dfa.sum())
    detail(request, f"200,000 row checks, {matched} matches, 0 disagreements")


# 9 ------------------------------------------------------------------------------

@pytest.mark.acceptance(9, "locality: reuse 16 fetches = reads/16 within 10%, miss rate nonincreasing")
def test_locality(request):
    reuses = (1, 2, 4, 8, 16, 32, 64, 128)
    runs = locality.locality_sweep(reuses, results=4096)
    r16 = runs[reuses.index(16)]
    ratio = r16.interconnect_fetches / (r16.reads / 16)
    rates = [r.miss_rate for r in runs]
    detail(request, f"reuse 16: {r16.interconnect_fetches} fetches for {r16.reads} reads (x{ratio:.3f} of reads/16); "
                    "miss rates " + ", ".join(f"{m:.3f}" for m in rates))
    assert ratio == pytest.approx(1.0, rel=0.10)
    assert r16.interconnect_fetches == r16.stats["analytic_fetches"]
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert all(r.values_ok for r in runs)


# 10 -----------------------------------------------------------------------------

@pytest.mark.acceptance(10, "checker: 5 fault classes caught, 1000 healthy runs clean, encodings agree")
def test_checker(request):
    automata = builtin_automata()
    false_pos = 0
    for seed in range(1000):
        recs = healthy_run(seed, steps=120).records
        found = check_all(automata, recs)
        false_pos += bool(found)
        if seed % 10 == 0:
            j, b = decode(encode(recs, "jsonl")), decode(encode(recs, "binary"))
            assert [r.key() for r in j] == [r.key() for r in b] == [r.key() for r in recs]
            assert check_all(automata, j) == check_all(automata, b) == found
    caught = {}
    base = healthy_run(5, steps=300).records
    for fault in FAULTS:
        hits = 0
        for seed in range(20):
            bad = inject(base, fault, seed)
            found = check_all(automata, bad)
            hits += bool(found)
            assert [v.key() for v in check_all(automata, decode(encode(bad, "binary")))] == [v.key() for v in found]
        caught[fault] = hits
    detail(request, f"false positives {false_pos}/1000; caught " + ", ".join(f"{f} {n}/20" for f, n in caught.items()))
    assert false_pos == 0
    assert all(n == 20 for n in caught.values())
