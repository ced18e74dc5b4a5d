"""Two agents joined by a link, driven by a seeded event loop.

The receiver of a request that needs a reply only consumes it once the VC
its reply will use has a credit; replies and voluntary downgrades are always
consumed. Anything an agent emits while the target VC is out of credit waits
in that agent's per-VC outbox (the sender stalls, nothing is dropped).
Every emitted message is recorded in the trace at the moment of emission.
"""

import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import List, Optional

from .errors import BusyLine
from .home import HomeAgent, RemoteView, joint_state
from .protocol import (CoherenceMessage, HomeState, Initiator, RemoteState, Role, TransitionClass,
                       classify_transition, message_rules)
from .remote import RemoteAgent
from .trace import TraceRecord
from .transport import Direction, Link, response_class


class CoherenceError(AssertionError):
    """A safety property failed during simulation."""


@dataclass
class Ghost:
    """Checker-side record of the coherence order (never read by agents)."""

    latest: dict = field(default_factory=dict)
    next_version: int = 1
    violations: list = field(default_factory=list)

    def new_version(self, line):
        v = self.next_version
        self.next_version += 1
        return v


class System:
    def __init__(self, home, remote: RemoteAgent, link: Optional[Link] = None,
                 record: bool = True, check: bool = True):
        self.home = home
        self.remote = remote
        self.link = link or Link()
        self.record = record
        self.check = check
        self.records: List[TraceRecord] = []
        self.outbox = defaultdict(deque)
        self.in_flight_per_line = defaultdict(int)
        self.ghost = Ghost()
        self.delivered = 0
        self.sent = 0

    @property
    def now(self):
        return self.link.now

    def preload(self, values):
        """Put initial line values in home memory before any traffic."""
        for line, v in values.items():
            self.home.store.values[line] = v
            self.ghost.latest[line] = v
        if values:
            self.ghost.next_version = max(self.ghost.next_version, max(values.values()) + 1)

    # -- emission ----------------------------------------------------------

    def emit(self, msgs):
        for msg in msgs:
            direction = Direction.from_sender(msg.sender)
            vc = self.link.vc_map.vc_for(msg)
            if self.record:
                self.records.append(TraceRecord.from_message(len(self.records), self.link.now,
                                                             direction, vc, msg))
            self.in_flight_per_line[msg.line] += 1
            self.sent += 1
            box = self.outbox[(direction, vc)]
            if box or not self.link.has_credit(direction, vc):
                box.append(msg)
            else:
                self.link.send(msg, direction)

    def flush(self):
        for (direction, vc), box in self.outbox.items():
            while box and self.link.has_credit(direction, vc):
                self.link.send(box.popleft(), direction)

    def stalled(self) -> int:
        return sum(len(b) for b in self.outbox.values())

    # -- delivery ----------------------------------------------------------

    def waits_on(self, env):
        msg = env.msg
        if msg.role is not Role.REQUEST or not msg.kind.reply_required:
            return None
        rule = message_rules(msg.kind, dirty=False)
        reply_vc = self.link.vc_map.vc_for_class(response_class(msg.kind, rule.reply_payload), msg.line)
        back = Direction.REMOTE_TO_HOME if env.direction is Direction.HOME_TO_REMOTE else Direction.HOME_TO_REMOTE
        if self.link.has_credit(back, reply_vc) and not self.outbox.get((back, reply_vc)):
            return None
        return back, reply_vc

    def deliver(self):
        """Deliver one consumable message. Returns the envelope or None."""
        env = self.link.deliver_envelope(lambda e: self.waits_on(e) is None)
        if env is None:
            return None
        return self._consume(env)

    def consumable(self):
        """(direction, vc) of every head message the receiver can take now."""
        return [(ch_dir, ch.id) for ch_dir in Direction for ch in self.link.channels[ch_dir]
                if ch.queue and self.waits_on(ch.queue[0]) is None]

    def deliver_at(self, direction, vc):
        return self._consume(self.link.pop(direction, vc))

    def _consume(self, env):
        self.delivered += 1
        self.in_flight_per_line[env.msg.line] -= 1
        agent = self.remote if env.direction.destination is Initiator.REMOTE else self.home
        before = self._joint(env.msg.line) if self.check else None
        out = agent.handle(env.msg)
        self.emit(out)
        self.flush()
        if self.check:
            self._check_step(env.msg.line, before)
        return env

    def detect_deadlock(self):
        return self.link.detect_deadlock(self.waits_on)

    def idle(self) -> bool:
        return self.link.in_flight() == 0 and self.stalled() == 0

    def drain(self, max_steps: int = 10_000_000):
        for _ in range(max_steps):
            if self.deliver() is None:
                return
        raise RuntimeError("drain did not finish")

    # -- CPU-side operations (with ghost bookkeeping) -----------------------

    def remote_read(self, line):
        res = self.remote.cpu_read(line)
        if res.hit:
            self._check_value("remote read", line, res.value)
        self.emit(res.messages)
        return res

    def remote_write(self, line):
        before = self._joint(line) if self.check else None
        st = self.remote.line(line).state
        v = self.ghost.next_version if st in (RemoteState.E, RemoteState.M) else None
        res = self.remote.cpu_write(line, v)
        if res.hit:
            self.ghost.new_version(line)
            self.ghost.latest[line] = v
        self.emit(res.messages)
        if self.check:
            self._check_step(line, before)
        return res

    def remote_evict(self, line, target=RemoteState.I):
        before = self._joint(line) if self.check else None
        msg = self.remote.voluntary_downgrade(line, target)
        self.emit([msg])
        if self.check:
            self._check_step(line, before)
        return msg

    def home_read(self, line):
        res = self.home.local_access(line)
        if res.done:
            self._check_value("home read", line, res.value)
        self.emit(res.messages)
        return res

    def home_write(self, line):
        before = self._joint(line) if self.check else None
        v = self.ghost.next_version
        res = self.home.local_access(line, write=True, value=v)
        if res.done:
            self.ghost.new_version(line)
            self.ghost.latest[line] = v
        self.emit(res.messages)
        if self.check:
            self._check_step(line, before)
        return res

    def home_evict(self, line):
        before = self._joint(line) if self.check else None
        self.home.evict(line)
        if self.check:
            self._check_step(line, before)

    # -- checks ------------------------------------------------------------

    def _joint(self, line):
        if not hasattr(self.home, "entry"):
            return None
        try:
            return joint_state(self.home, self.remote, line)
        except ValueError:
            h, r = self.home.entry(line).home, self.remote.line(line).state
            self._fail(f"line {line} reached non-allowable pair {h.value}{r.value}")
            return None

    def _check_value(self, what, line, value):
        if not self.check:
            return
        expect = self.ghost.latest.get(line, self.home.store.default if hasattr(self.home, "store") else 0)
        if value != expect:
            self._fail(f"data-value: {what} of line {line} returned v{value}, latest is v{expect}")

    def _check_step(self, line, before):
        if before is None:
            return
        after = self._joint(line)
        if after is None:
            return
        if after is not before and classify_transition(before, after) is TransitionClass.ILLEGAL:
            self._fail(f"illegal transition {before.value} -> {after.value} on line {line}")
        if self.in_flight_per_line[line] == 0:
            self._check_quiescent(line)

    def _check_quiescent(self, line):
        h = self.home.entry(line)
        r = self.remote.line(line)
        writable = sum([h.home in (HomeState.E, HomeState.M),
                        r.state in (RemoteState.E, RemoteState.M)])
        if writable and (h.home is not HomeState.I and r.state is not RemoteState.I):
            self._fail(f"SWMR: line {line} home {h.home.value} remote {r.state.value}")
        view_ok = {RemoteView.INVALID: (RemoteState.I,), RemoteView.SHARED: (RemoteState.S,),
                   RemoteView.EXCLUSIVE_OR_MODIFIED: (RemoteState.E, RemoteState.M)}[h.remote_view]
        if r.pending is None and r.state not in view_ok:
            self._fail(f"directory: line {line} view {h.remote_view.value}, remote {r.state.value}")

    def _fail(self, text):
        self.ghost.violations.append(text)


class RandomDriver:
    """Seeded random mix of CPU operations and deliveries.

    ``ops`` weights the operation kinds: remote read/write/evict and home
    read/write/evict. ``p_deliver`` is the chance a step delivers a message
    instead of issuing an operation.
    """

    OPS = ("rr", "rw", "re", "hr", "hw", "he")

    def __init__(self, system: System, lines, seed=0, p_deliver=0.5, weights=None):
        self.sys = system
        self.lines = list(lines)
        self.rng = random.Random(seed)
        self.p_deliver = p_deliver
        w = weights or {"rr": 4, "rw": 2, "re": 1, "hr": 2, "hw": 1, "he": 1}
        self.ops = [op for op in self.OPS if w.get(op)]
        self.weights = [w[op] for op in self.ops]
        self.schedule = []

    def step(self):
        s = self.sys
        if self.rng.random() < self.p_deliver and s.deliver() is not None:
            return "deliver"
        op = self.rng.choices(self.ops, self.weights)[0]
        line = self.rng.choice(self.lines)
        self.schedule.append((op, line))
        try:
            self.apply(op, line)
        except BusyLine:
            return "busy"
        return op

    def apply(self, op, line):
        s = self.sys
        if op == "rr":
            s.remote_read(line)
        elif op == "rw":
            s.remote_write(line)
        elif op == "re":
            st = s.remote.line(line).state
            if st is not RemoteState.I:
                s.remote_evict(line, RemoteState.I)
        elif op == "hr":
            s.home_read(line)
        elif op == "hw":
            s.home_write(line)
        elif op == "he":
            s.home_evict(line)

    def run(self, steps):
        for _ in range(steps):
            self.step()
        return self


def healthy_run(seed, steps=200, lines=(0, 1, 2, 3), **kw):
    """A small randomized full-protocol run, drained to quiescence."""
    link = Link(seed=seed, latency_ns=kw.pop("latency_ns", 160.0))
    sysm = System(HomeAgent(**kw), RemoteAgent(capacity=3), link)
    RandomDriver(sysm, lines, seed=seed).run(steps)
    sysm.drain()
    return sysm
