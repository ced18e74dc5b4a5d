"""Command-line entry point: ``ecisim <command> ...``.

Exit codes: 0 clean, 1 usage or config error, 2 protocol violation,
3 deadlock, 4 state space exceeded.
"""

import argparse
import csv
import functools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence

from . import subsetting as sb
from .config import DEFAULT_CONFIG, PRESETS, REMOTE_SUBSETS, ConfigError, load_config
from .errors import EciError
from .home import HomeAgent, HomeStrategy
from .modelcheck import StateSpaceExceeded, model_check
from .nfa import ParseError, check_all, compile_spec
from .protocol import RequestKind
from .remote import RemoteAgent
from .scenarios import OK, STATE_SPACE, USAGE, VIOLATION, run_scenario
from .specs import builtin_automata
from .trace import MalformedRecord, encode, read_trace, write_trace


class UsageError(Exception):
    pass


def int_list(text: str) -> List[int]:
    """``4``, ``1,2,4`` or an inclusive range ``1..48``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return out


def float_list(text: str) -> List[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _emit_json(obj, path: Optional[str]):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _emit_csv(rows: List[dict], path: Optional[str]):
    if not path or not rows:
        return
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = load_config(args.config, args.preset)
    problems = sc.validate()
    if problems:
        for p in problems:
            print(f"subset: {p}", file=sys.stderr)
        return USAGE
    out = run_scenario(sc, args.seed, record=bool(args.trace) or not args.no_check)
    if args.trace:
        write_trace(args.trace, out.records, sc.get("output", "trace_format"))
    _emit_json(out.stats, args.stats)
    return out.code


# -- modelcheck ----------------------------------------------------------------

HOMES = {"full": None, "stateless": sb.StatelessHome, "two_state": sb.TwoStateHome}


def cmd_modelcheck(args) -> int:
    drop = tuple(RequestKind(k) for k in args.remote_drops)
    strategy = HomeStrategy(args.strategy)

    def home_factory():
        if args.home != "full":
            return HOMES[args.home]()
        return HomeAgent(strategy, home_caches=args.home_caches, drop_forward_reply=args.drop_forward_reply)

    def remote_factory():
        return RemoteAgent(capacity=args.capacity or None, read_only=args.read_only, drop_replies=drop)

    ops = [op for op in args.ops.split(",") if op]
    try:
        res = model_check(args.lines, args.depth, home_factory, remote_factory, ops=ops,
                          credits=args.credits, max_states=args.max_states)
    except StateSpaceExceeded as e:
        _emit_json({"error": "StateSpaceExceeded", "visited": e.visited, "limit": e.limit}, args.out)
        return STATE_SPACE
    _emit_json(res.to_json(), args.out)
    return OK if res.ok else VIOLATION


# -- trace -----------------------------------------------------------------------

def cmd_trace_decode(args) -> int:
    records = read_trace(args.file)
    data = encode(records, args.format)
    if args.out:
        with open(args.out, "wb") as f:
            f.write(data)
    else:
        sys.stdout.write(data.decode()) if args.format == "jsonl" else sys.stdout.buffer.write(data)
    return OK


def cmd_trace_check(args) -> int:
    records = read_trace(args.file)
    automata = []
    if not args.no_builtin:
        subset = None
        if args.remote_subset:
            subset = (REMOTE_SUBSETS[args.remote_subset](), sb.full_home(True))
        automata.extend(builtin_automata(subset))
    for path in args.spec or ():
        with open(path) as f:
            automata.append(compile_spec(f.read()))
    if not automata:
        raise UsageError("no specs to check against")
    found = check_all(automata, records)
    for v in found:
        print(json.dumps(v.to_json(), sort_keys=True))
    print(f"{len(records)} records, {len(automata)} specs, {len(found)} violations", file=sys.stderr)
    return VIOLATION if found else OK


# -- bench -----------------------------------------------------------------------

def _bench_select(point):
    from .workloads import DEFAULT as m, cpu_select_scan, select_scan, select_table
    rows, sel, threads, seed = point
    t = select_table(rows, sel, seed=seed)
    r = select_scan(t, threads=threads)
    c = cpu_select_scan(t, threads=threads)
    return {"selectivity": sel, "threads": threads, "scan_rate_rows_s": r.scan_rate, "results_s": r.results_rate,
            "model_scan_rate_rows_s": m.select_scan_rate(sel, threads), "cpu_scan_rate_rows_s": c.scan_rate,
            "cpu_results_s": c.results_rate}


def _bench_kv(point):
    from .workloads import DEFAULT as m, KvStore, kv_cpu, kv_offload
    buckets, chain, threads, lookups, seed = point
    store = KvStore(buckets, chain, seed)
    r = kv_offload(store, threads, lookups, seed=seed)
    c = kv_cpu(store, threads, lookups, seed=seed)
    return {"chain": chain, "threads": threads, "keys_s": r.keys_per_s, "model_keys_s": m.kvs_rate(chain, threads),
            "cpu_keys_s": c.keys_per_s, "values_ok": r.values_ok}


@functools.lru_cache(maxsize=8)
def _regex_input(rows, pattern, sel, seed):
    from .workloads.regex_filter import reference_matches, regex_table
    t = regex_table(rows, [pattern], sel, seed=seed)
    return (t,) + reference_matches(pattern, t)


def _bench_regex(point):
    from .workloads import DEFAULT as m
    from .workloads.regex_filter import cpu_regex_scan, regex_scan
    rows, pattern, sel, threads, seed = point
    t, flags, steps = _regex_input(rows, pattern, sel, seed)
    r = regex_scan(pattern, t, threads)
    c = cpu_regex_scan(pattern, t, threads, steps=steps, flags=flags)
    return {"pattern": pattern, "threads": threads, "selectivity": r.stats["selectivity"],
            "scan_rate_rows_s": r.scan_rate, "model_scan_rate_rows_s": r.stats["model_scan_rate"],
            "cpu_scan_rate_rows_s": c.scan_rate, "cpu_model_scan_rate_rows_s": m.regex_cpu_scan_rate(threads, steps.mean()),
            "match_sets_equal": bool(flags[r.rows].all() and flags.sum() == len(r.rows))}


def _bench_locality(point):
    from .workloads.locality import l1_cache, locality_run
    reuse, results, stride, size, ways = point
    r = locality_run(reuse, results, stride, l1_cache(size, ways))
    return {"reuse": reuse, "stride": stride, **r.stats, "values_ok": r.values_ok}


def _sweep(fn: Callable, points: Sequence, jobs: int) -> List[dict]:
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(fn, points))
    return [fn(p) for p in points]


def cmd_bench(args) -> int:
    w = args.workload
    if w == "select":
        points = [(args.rows, s, t, args.seed) for s in args.selectivity for t in args.threads]
        rows = _sweep(_bench_select, points, args.jobs)
    elif w == "kv":
        points = [(args.buckets, L, t, args.lookups, args.seed) for L in args.chain for t in args.threads]
        rows = _sweep(_bench_kv, points, args.jobs)
    elif w == "regex":
        points = [(args.rows, args.pattern, s, t, args.seed) for s in args.selectivity for t in args.threads]
        rows = _sweep(_bench_regex, points, args.jobs)
    else:
        points = [(r, args.results, args.stride, args.cache_bytes, args.ways) for r in args.reuse]
        rows = _sweep(_bench_locality, points, args.jobs)
    _emit_json({"workload": w, "points": rows}, args.stats)
    _emit_csv(rows, args.csv)
    bad = any(r.get("values_ok") is False or r.get("match_sets_equal") is False for r in rows)
    return VIOLATION if bad else OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecisim", description="Two-node coherence protocol simulator and checker.")
    p.add_argument("--print-default-config", action="store_true", help="print every scenario key with its default")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("simulate", help="run a scenario")
    s.add_argument("--config", help="INI scenario file (defaults apply to missing keys)")
    s.add_argument("--preset", choices=sorted(PRESETS), help="run a bundled scenario instead of --config")
    s.add_argument("--seed", type=int, help="overrides [scenario] seed")
    s.add_argument("--trace", help="write the message trace here")
    s.add_argument("--stats", help="write stats JSON here instead of stdout")
    s.add_argument("--no-check", action="store_true", help="skip the builtin trace checker")
    s.set_defaults(fn=cmd_simulate)

    m = sub.add_parser("modelcheck", help="exhaustive breadth-first exploration")
    m.add_argument("--lines", type=int, default=1)
    m.add_argument("--depth", type=int, default=20)
    m.add_argument("--credits", type=int, default=2)
    m.add_argument("--capacity", type=int, default=0, help="remote cache lines, 0 = unbounded")
    m.add_argument("--home", choices=sorted(HOMES), default="full")
    m.add_argument("--strategy", choices=[x.value for x in HomeStrategy], default=HomeStrategy.HIDDEN_O.value)
    m.add_argument("--home-caches", action="store_true")
    m.add_argument("--read-only", action="store_true", help="remote never writes")
    m.add_argument("--ops", default="rr,rw,re,rd,hr,hw,he")
    m.add_argument("--max-states", type=int, default=2_000_000)
    m.add_argument("--remote-drops", type=lambda s: [k for k in s.split(",") if k], default=[],
                   help="home downgrade kinds the remote swallows without answering (fault)")
    m.add_argument("--drop-forward-reply", action="store_true", help="home skips the dirty-forward reply (fault)")
    m.add_argument("--out")
    m.set_defaults(fn=cmd_modelcheck)

    t = sub.add_parser("trace", help="decode or check trace files")
    tsub = t.add_subparsers(dest="trace_command", required=True)
    d = tsub.add_parser("decode")
    d.add_argument("file")
    d.add_argument("--format", choices=("jsonl", "binary"), default="jsonl")
    d.add_argument("--out")
    d.set_defaults(fn=cmd_trace_decode)
    c = tsub.add_parser("check")
    c.add_argument("file")
    c.add_argument("--spec", action="append", help="extra spec file (repeatable)")
    c.add_argument("--no-builtin", action="store_true")
    c.add_argument("--remote-subset", choices=sorted(REMOTE_SUBSETS))
    c.set_defaults(fn=cmd_trace_check)

    b = sub.add_parser("bench", help="workload sweeps")
    b.add_argument("workload", choices=("select", "kv", "regex", "locality"))
    b.add_argument("--threads", type=int_list, default=[1, 2, 4, 8, 16, 32, 48])
    b.add_argument("--selectivity", type=float_list, default=[0.1])
    b.add_argument("--rows", type=int, default=51_200)
    b.add_argument("--pattern", default="qzx[0-9]+k")
    b.add_argument("--chain", type=int_list, default=[1, 2, 4, 8, 16, 32, 64, 128])
    b.add_argument("--buckets", type=int, default=512)
    b.add_argument("--lookups", type=int, default=20_000)
    b.add_argument("--reuse", "--D", type=int_list, default=[1, 2, 4, 8, 16, 32, 64], dest="reuse",
                   help="reuse degree sweep: each result is read this many times")
    b.add_argument("--stride", type=int, default=1)
    b.add_argument("--results", type=int, default=4096)
    b.add_argument("--cache-bytes", type=int, default=32 * 1024)
    b.add_argument("--ways", type=int, default=8)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
    b.add_argument("--stats", help="write stats JSON here instead of stdout")
    b.add_argument("--csv", help="write the sweep as CSV")
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE if e.code else OK
    if args.print_default_config:
        sys.stdout.write(DEFAULT_CONFIG)
        return OK
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return USAGE
    try:
        return args.fn(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error
        sys.stdout = open("/dev/null", "w")
        return OK
    except (ConfigError, UsageError, ParseError, MalformedRecord, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except EciError as e:
        print(f"protocol violation: {type(e).__name__}: {e}", file=sys.stderr)
        return VIOLATION


if __name__ == "__main__":
    sys.exit(main())
