"""Protocol subsets: declaration, pairwise validation and reduced home agents."""

import enum
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional

from .errors import BusyLine, DerivationUnsound, ProtocolViolation, UnknownTransaction, WriteUnderReadOnlySubset
from .home import BackingStore, HomeAgent, LocalResult
from .remote import RemoteAgent
from .protocol import (HOME_KINDS, REMOTE_KINDS, CoherenceMessage, Initiator, JointState, RemoteState,
                       RequestKind, Role, is_home_distinguishable, is_remote_distinguishable)
from .system import RandomDriver, System
from .trace import TraceRecord
from .transport import Direction, Link

K = RequestKind
WRITE_PATH = frozenset({K.READ_EXCLUSIVE, K.UPGRADE_SHARED_TO_EXCLUSIVE})


class Node(enum.Enum):
    HOME = "Home"
    REMOTE = "Remote"


def _kinds(values) -> FrozenSet[RequestKind]:
    return frozenset(v if isinstance(v, RequestKind) else RequestKind(v) for v in values)


@dataclass(frozen=True)
class ProtocolSubset:
    """What one node may send, handle and answer.

    ``replies`` defaults to the reply-bearing kinds among ``receptions``.
    ``initiations_by_state`` / ``receptions_by_state`` optionally restrict
    kinds per joint state; they feed the closure checks of ``validate``.
    """

    node: Node
    initiations: FrozenSet[RequestKind]
    receptions: FrozenSet[RequestKind]
    read_only: bool = False
    home_caches: bool = False
    remote_caches: bool = True
    replies: Optional[FrozenSet[RequestKind]] = None
    initiations_by_state: Optional[Dict[JointState, FrozenSet[RequestKind]]] = None
    receptions_by_state: Optional[Dict[JointState, FrozenSet[RequestKind]]] = None

    def __post_init__(self):
        object.__setattr__(self, "node", Node(self.node))
        object.__setattr__(self, "initiations", _kinds(self.initiations))
        object.__setattr__(self, "receptions", _kinds(self.receptions))
        if self.replies is None:
            object.__setattr__(self, "replies", frozenset(k for k in self.receptions if k.reply_required))
        else:
            object.__setattr__(self, "replies", _kinds(self.replies))

    def __hash__(self):
        return hash((self.node, self.initiations, self.receptions, self.replies, self.read_only))

    def without(self, kind: RequestKind) -> "ProtocolSubset":
        """The same subset with ``kind`` no longer initiated."""
        return ProtocolSubset(self.node, self.initiations - {kind}, self.receptions, self.read_only,
                              self.home_caches, self.remote_caches, self.replies,
                              self.initiations_by_state, self.receptions_by_state)


def full_home(home_caches: bool = False) -> ProtocolSubset:
    return ProtocolSubset(Node.HOME, HOME_KINDS, REMOTE_KINDS, home_caches=home_caches)


def full_remote() -> ProtocolSubset:
    return ProtocolSubset(Node.REMOTE, REMOTE_KINDS, HOME_KINDS)


def read_only_remote() -> ProtocolSubset:
    """Reads and clean evictions only; no home-initiated traffic is handled."""
    return ProtocolSubset(Node.REMOTE, {K.READ_SHARED, K.REMOTE_DOWNGRADE_TO_INVALID}, set(), read_only=True)


def stateless_home() -> ProtocolSubset:
    return ProtocolSubset(Node.HOME, set(),
                          {K.READ_SHARED, K.REMOTE_DOWNGRADE_TO_INVALID, K.REMOTE_DOWNGRADE_TO_SHARED})


def two_state_home() -> ProtocolSubset:
    return ProtocolSubset(Node.HOME, {K.HOME_DOWNGRADE_TO_INVALID},
                          {K.READ_SHARED, K.REMOTE_DOWNGRADE_TO_INVALID, K.REMOTE_DOWNGRADE_TO_SHARED})


def read_only_remote_with_invalidation() -> ProtocolSubset:
    return ProtocolSubset(Node.REMOTE, {K.READ_SHARED, K.REMOTE_DOWNGRADE_TO_INVALID},
                          {K.HOME_DOWNGRADE_TO_INVALID}, read_only=True)


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class SubsetViolation:
    node: Node
    kind: Optional[RequestKind]
    detail: str = ""

    @property
    def name(self) -> str:
        return type(self).__name__


class UnsupportedReception(SubsetViolation):
    """The peer may send ``kind`` but ``node`` cannot handle it."""


class ClosureViolation(SubsetViolation):
    """``kind`` is allowed in one state but not in another the node cannot tell apart."""


class MissingReply(SubsetViolation):
    """``node`` initiates a reply-bearing ``kind`` its peer will not answer."""


class OrphanReply(SubsetViolation):
    """``node`` answers ``kind`` but the peer never sends it."""


class ReadOnlyInconsistent(SubsetViolation):
    """A read-only remote declares a write-path initiation."""


def _indistinguishable(node: Node):
    if node is Node.REMOTE:
        return lambda a, b: not is_remote_distinguishable(a, b)
    return lambda a, b: not is_home_distinguishable(a, b)


def _closure(sub: ProtocolSubset, by_state, what: str) -> List[SubsetViolation]:
    if not by_state:
        return []
    same = _indistinguishable(sub.node)
    out = []
    states = list(JointState)
    for i, a in enumerate(states):
        for b in states[i + 1:]:
            if a is b or not same(a, b):
                continue
            ka = frozenset(by_state.get(a, ()))
            kb = frozenset(by_state.get(b, ()))
            for kind in sorted(ka ^ kb, key=lambda k: k.value):
                out.append(ClosureViolation(sub.node, kind,
                                            f"{what} differs between {a.value} and {b.value}"))
    return out


def validate(subset_home: ProtocolSubset, subset_remote: ProtocolSubset) -> List[SubsetViolation]:
    """Every reason the two subsets cannot interoperate; empty when they can."""
    out: List[SubsetViolation] = []
    pairs = ((subset_home, subset_remote), (subset_remote, subset_home))
    for me, peer in pairs:
        for kind in sorted(peer.initiations - me.receptions, key=lambda k: k.value):
            out.append(UnsupportedReception(me.node, kind, f"{peer.node.value} may send it"))
    for sub in (subset_home, subset_remote):
        out += _closure(sub, sub.initiations_by_state, "initiation")
        out += _closure(sub, sub.receptions_by_state, "reception")
    for me, peer in pairs:
        for kind in sorted(me.initiations, key=lambda k: k.value):
            if kind.reply_required and kind in peer.receptions and kind not in peer.replies:
                out.append(MissingReply(me.node, kind, f"{peer.node.value} does not answer it"))
        for kind in sorted(me.replies - peer.initiations, key=lambda k: k.value):
            out.append(OrphanReply(me.node, kind, f"{peer.node.value} never sends it"))
    if subset_remote.read_only:
        for kind in sorted(subset_remote.initiations & WRITE_PATH, key=lambda k: k.value):
            out.append(ReadOnlyInconsistent(Node.REMOTE, kind))
    return out


# -- reduced home agents ------------------------------------------------------

class StatelessHome:
    """Home with no per-line state for a read-only, caching remote.

    Every ReadShared is served from the data source and voluntary downgrades
    are swallowed. It never initiates anything, so the joint state of every
    line is always "I" from the home's side.
    """

    receptions = stateless_home().receptions

    def __init__(self, store: Optional[BackingStore] = None):
        self.store = store or BackingStore()
        self.entries = {}
        self.stats = {"served": 0, "ignored": 0}

    def directory_bytes(self) -> int:
        return 0

    def handle(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        if msg.role is not Role.REQUEST or msg.kind not in self.receptions:
            raise ProtocolViolation(f"stateless home cannot handle {msg.role.value} {msg.kind.value}")
        if msg.kind is K.READ_SHARED:
            self.stats["served"] += 1
            return [msg.reply(self.store.read(msg.line))]
        self.stats["ignored"] += 1
        return []

    def local_access(self, line: int, write: bool = False, value: Optional[int] = None) -> LocalResult:
        if write:
            raise WriteUnderReadOnlySubset("the stateless home has no way to invalidate remote copies")
        return LocalResult(True, self.store.read(line))

    def evict(self, line: int):
        pass

    def busy(self, line: int) -> bool:
        return False

    def clone(self):
        new = StatelessHome(self.store.copy())
        new.stats = dict(self.stats)
        return new


class TwoStateHome:
    """One bit per line: may the remote hold a shared copy?

    Home-side writes invalidate the remote first, so the data source can
    change while the remote still caches.
    """

    receptions = two_state_home().receptions

    def __init__(self, store: Optional[BackingStore] = None):
        self.store = store or BackingStore()
        self.shared = set()
        self.pending: Dict[int, int] = {}
        self.next_id = 1
        self.stats = {"served": 0, "invalidations": 0}

    def directory_bytes(self) -> int:
        return (len(self.shared) + 7) // 8

    def handle(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        if msg.role is Role.RESPONSE:
            if self.pending.get(msg.line) != msg.id or msg.kind is not K.HOME_DOWNGRADE_TO_INVALID:
                raise UnknownTransaction(f"response {msg.kind.value} id={msg.id}")
            del self.pending[msg.line]
            self.shared.discard(msg.line)
            return []
        if msg.kind not in self.receptions:
            raise ProtocolViolation(f"two-state home cannot handle {msg.kind.value}")
        if msg.kind is K.READ_SHARED:
            self.shared.add(msg.line)
            self.stats["served"] += 1
            return [msg.reply(self.store.read(msg.line))]
        self.shared.discard(msg.line)
        return []

    def local_access(self, line: int, write: bool = False, value: Optional[int] = None) -> LocalResult:
        if line in self.pending:
            raise BusyLine(f"line {line} busy")
        if not write:
            return LocalResult(True, self.store.read(line))
        if line in self.shared:
            tid = self.next_id
            self.next_id += 2
            self.pending[line] = tid
            self.stats["invalidations"] += 1
            return LocalResult(False, messages=(CoherenceMessage(tid, Role.REQUEST, K.HOME_DOWNGRADE_TO_INVALID, line),))
        self.store.write(line, value)
        return LocalResult(True, value)

    def evict(self, line: int):
        pass

    def busy(self, line: int) -> bool:
        return line in self.pending

    def clone(self):
        new = TwoStateHome(self.store.copy())
        new.shared = set(self.shared)
        new.pending = dict(self.pending)
        new.next_id = self.next_id
        new.stats = dict(self.stats)
        return new


def derive_stateless_home(peer: ProtocolSubset, store: Optional[BackingStore] = None):
    """(home subset, agent) for a read-only peer; refuses any write-capable peer."""
    if peer.node is not Node.REMOTE:
        raise DerivationUnsound("the peer of a home must be a remote")
    writes = peer.initiations & WRITE_PATH
    if writes:
        raise DerivationUnsound("peer may initiate " + ", ".join(sorted(k.value for k in writes)))
    if not peer.read_only:
        raise DerivationUnsound("peer subset is not declared read-only")
    return stateless_home(), StatelessHome(store)


# -- trace conformance --------------------------------------------------------

@dataclass
class Verdict:
    equal: bool
    index: Optional[int] = None
    left: Optional[tuple] = None
    right: Optional[tuple] = None

    def __bool__(self):
        return self.equal

    def __str__(self):
        if self.equal:
            return "Equal"
        return f"NotEqual at {self.index}: {self.left} vs {self.right}"


def remote_observable(records) -> List[tuple]:
    """What the remote sees: each message towards it as (kind, role, id, line, payload, version)."""
    return [(r.kind.value, r.role.value, r.id, r.line, r.payload, r.version)
            for r in records if r.dir is Direction.HOME_TO_REMOTE]


def conformance_diff(full_trace, subset_trace) -> Verdict:
    a = remote_observable(full_trace)
    b = remote_observable(subset_trace)
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return Verdict(False, i, x, y)
    if len(a) != len(b):
        i = min(len(a), len(b))
        return Verdict(False, i, a[i] if i < len(a) else None, b[i] if i < len(b) else None)
    return Verdict(True)


def read_only_comparison(requests: int = 10_000, seed: int = 0, lines: int = 16, capacity: int = 4):
    """Run one random read-only schedule against a full home and a stateless home.

    Both runs use the same seed, so the CPU operations and the delivery
    choices line up as long as both homes send the same messages. Returns
    (verdict, full system, stateless system).
    """
    def run(home):
        sysm = System(home, RemoteAgent(capacity=capacity, read_only=True), Link(seed=seed))
        drv = RandomDriver(sysm, range(lines), seed=seed, weights={"rr": 4, "re": 1})
        reads = 0
        while reads < requests:
            n = len(drv.schedule)
            drv.step()
            reads += len(drv.schedule) > n and drv.schedule[-1][0] == "rr"
        sysm.drain()
        return sysm, drv.schedule

    full, sched_full = run(HomeAgent())
    lean, sched_lean = run(StatelessHome())
    verdict = conformance_diff(full.records, lean.records)
    if verdict and sched_full != sched_lean:
        verdict = Verdict(False, len(sched_full), ("schedule",), ("schedule",))
    return verdict, full, lean
