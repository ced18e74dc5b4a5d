"""Explicit-state breadth-first exploration of the two-agent system.

A state is a whole ``System`` (agents, VC queues, outboxes, ghost latest
versions). Transaction ids and version stamps only matter up to order and
equality, so states are keyed with both rank-compressed; that keeps the
space finite even though counters grow without bound.

Every step checks the joint-state rules and data values (done by
``System``); in addition a state with work pending but nothing in flight
is reported as stuck.
"""

import copy
import time
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .errors import BusyLine, EciError, IllegalDowngrade, WriteUnderReadOnlySubset
from .home import HomeAgent
from .protocol import RemoteState
from .remote import RemoteAgent
from .system import System
from .transport import Direction, Link, VcMap

CPU_OPS = ("rr", "rw", "re", "rd", "hr", "hw", "he")


class StateSpaceExceeded(RuntimeError):
    def __init__(self, visited: int, limit: int):
        super().__init__(f"visited {visited} states, over the limit of {limit}")
        self.visited = visited
        self.limit = limit


@dataclass
class CheckResult:
    states: int
    transitions: int
    depth: int
    complete: bool
    elapsed: float
    violation: Optional[str] = None
    counterexample: List[tuple] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violation is None

    def to_json(self):
        return {"states": self.states, "transitions": self.transitions, "depth": self.depth,
                "complete": self.complete, "elapsed_s": round(self.elapsed, 3), "ok": self.ok,
                "violation": self.violation,
                "counterexample": [list(map(str, a)) for a in self.counterexample]}


def _msg_key(m, fid, fv):
    return (fid(m.id), m.role.value, m.kind.value, m.line, fv(m.data), m.dirty)


def state_key(s: System, fid=lambda x: x, fv=lambda x: x):
    h = s.home
    if isinstance(h, HomeAgent):
        home = tuple(sorted((l, e.home.value, e.remote_view.value, fv(e.data), fid(e.serialized),
                             e.target.value if e.target else None,
                             tuple(_msg_key(m, fid, fv) for m in e.deferred))
                            for l, e in h.entries.items()))
    else:
        home = (tuple(sorted(getattr(h, "shared", ()))),
                tuple(sorted((l, fid(t)) for l, t in getattr(h, "pending", {}).items())))
    store = tuple(sorted((l, fv(v)) for l, v in h.store.values.items()))
    r = s.remote
    remote = tuple(sorted((l, e.state.value, e.pending.value if e.pending else None, fid(e.pending_id),
                           fv(e.data), e.dirty, _msg_key(e.held, fid, fv) if e.held else None)
                          for l, e in r.lines.items()))
    link = tuple((d.value, ch.id, tuple(_msg_key(e.msg, fid, fv) for e in ch.queue))
                 for d in Direction for ch in s.link.channels[d] if ch.queue)
    boxes = tuple(sorted((d.value, vc, tuple(_msg_key(m, fid, fv) for m in box))
                         for (d, vc), box in s.outbox.items() if box))
    ghost = tuple(sorted((l, fv(v)) for l, v in s.ghost.latest.items()))
    return (home, store, remote, r.eviction.key(), link, boxes, ghost)


def canonical_key(s: System):
    ids, vers = set(), set()

    def cid(x):
        if x is not None:
            ids.add(x)
        return x

    def cv(x):
        if x is not None:
            vers.add(x)
        return x

    state_key(s, cid, cv)
    vers.add(s.home.store.default)
    rid = {x: i for i, x in enumerate(sorted(ids))}
    rv = {x: i for i, x in enumerate(sorted(vers))}
    return state_key(s, lambda x: None if x is None else rid[x], lambda x: None if x is None else rv[x])


def _stuck(s: System) -> Optional[str]:
    if not s.idle():
        return None
    for line, e in s.remote.lines.items():
        if e.pending is not None:
            return f"stuck: remote waits ({e.pending.value}) on line {line} with nothing in flight"
    h = s.home
    if isinstance(h, HomeAgent):
        for line, e in h.entries.items():
            if e.serialized is not None:
                return f"stuck: home downgrade {e.target.value} on line {line} never answered"
            if e.deferred:
                return f"stuck: home holds deferred requests on line {line}"
    elif getattr(h, "pending", None):
        return f"stuck: home waits on lines {sorted(h.pending)}"
    return None


def apply(s: System, action) -> bool:
    """Apply ``action`` in place. False if it is not enabled in this state."""
    op = action[0]
    try:
        if op == "deliver":
            s.deliver_at(Direction(action[1]), action[2])
            return True
        line = action[1]
        if op == "rr":
            if s.remote.line(line).state is not RemoteState.I:
                return False  # hits do not change the state
            s.remote_read(line)
        elif op == "rw":
            s.remote_write(line)
        elif op == "re":
            s.remote_evict(line, RemoteState.I)
        elif op == "rd":
            s.remote_evict(line, RemoteState.S)
        elif op == "hr":
            s.home_read(line)
        elif op == "hw":
            s.home_write(line)
        elif op == "he":
            s.home_evict(line)
    except (BusyLine, IllegalDowngrade, WriteUnderReadOnlySubset):
        return False
    return True


def enabled(s: System, lines: Sequence[int], ops: Sequence[str]):
    acts = [("deliver", d.value, vc) for d, vc in s.consumable()]
    acts += [(op, l) for l in lines for op in ops]
    return acts


def model_check(lines: int = 1, depth: int = 20, home_factory=None, remote_factory=None,
                ops: Sequence[str] = CPU_OPS, credits: int = 2, max_states: int = 2_000_000,
                check_reads: bool = True) -> CheckResult:
    """Breadth-first search to ``depth`` steps from the all-invalid state.

    Stops at the first violation and returns the action sequence leading to
    it. Raises StateSpaceExceeded past ``max_states`` distinct states.
    """
    t0 = time.perf_counter()
    home = home_factory() if home_factory else HomeAgent()
    remote = remote_factory() if remote_factory else RemoteAgent()
    init = System(home, remote, Link(VcMap.class_separated(credits=credits), reorder="fifo"), record=False)
    line_ids = list(range(lines))
    key0 = canonical_key(init)
    parent = {key0: None}
    frontier = deque([(init, key0, 0)])
    transitions = 0
    reached = 0
    while frontier:
        s, key, d = frontier.popleft()
        reached = max(reached, d)
        if d >= depth:
            continue
        for act in enabled(s, line_ids, ops):
            nxt = copy.deepcopy(s)
            try:
                if not apply(nxt, act):
                    continue
            except EciError as e:
                return _fail(parent, key, act, f"{type(e).__name__}: {e}", len(parent), transitions, reached, t0)
            transitions += 1
            if nxt.ghost.violations:
                return _fail(parent, key, act, nxt.ghost.violations[0], len(parent), transitions, reached, t0)
            nkey = canonical_key(nxt)
            if nkey in parent:
                continue
            parent[nkey] = (key, act)
            stuck = _stuck(nxt)
            if stuck:
                return _fail(parent, nkey, None, stuck, len(parent), transitions, reached, t0)
            if len(parent) > max_states:
                raise StateSpaceExceeded(len(parent), max_states)
            frontier.append((nxt, nkey, d + 1))
    complete = reached < depth
    return CheckResult(len(parent), transitions, reached, complete, time.perf_counter() - t0)


def _fail(parent, key, act, text, states, transitions, depth, t0):
    path = [act] if act is not None else []
    while parent.get(key) is not None:
        key, a = parent[key]
        path.append(a)
    path.reverse()
    return CheckResult(states, transitions, depth, False, time.perf_counter() - t0, text, path)
