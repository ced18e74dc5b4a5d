"""The remote node: a cache of home-owned lines in the 4-state view."""

import enum
from collections import OrderedDict
from dataclasses import dataclass
from typing import List, Optional

from .errors import BusyLine, IllegalDowngrade, ProtocolViolation, UnknownTransaction, WriteUnderReadOnlySubset
from .protocol import CoherenceMessage, RemoteState, RequestKind, Role

K = RequestKind


class PendingKind(enum.Enum):
    AWAIT_SHARED_DATA = "AwaitSharedData"
    AWAIT_EXCLUSIVE_DATA = "AwaitExclusiveData"
    AWAIT_UPGRADE_ACK = "AwaitUpgradeAck"
    AWAIT_HOME_DOWNGRADE_DONE = "AwaitHomeDowngradeDone"


_PENDING_FOR = {
    K.READ_SHARED: PendingKind.AWAIT_SHARED_DATA,
    K.READ_EXCLUSIVE: PendingKind.AWAIT_EXCLUSIVE_DATA,
    K.UPGRADE_SHARED_TO_EXCLUSIVE: PendingKind.AWAIT_UPGRADE_ACK,
}

_RANK = {RemoteState.I: 0, RemoteState.S: 1, RemoteState.E: 2, RemoteState.M: 3}


@dataclass
class RemoteLine:
    state: RemoteState = RemoteState.I
    pending: Optional[PendingKind] = None
    pending_id: Optional[int] = None
    data: Optional[int] = None
    dirty: bool = False
    # A home downgrade that arrived while our own request was outstanding.
    # It is answered once that request completes.
    held: Optional[CoherenceMessage] = None

    @property
    def transients(self):
        out = [self.pending] if self.pending else []
        if self.held is not None:
            out.append(PendingKind.AWAIT_HOME_DOWNGRADE_DONE)
        return out

    def key(self):
        return (self.state, self.pending, self.pending_id, self.data, self.dirty, self.held)


@dataclass
class Access:
    """Outcome of a CPU access: a hit (with value) or the messages a miss issued."""

    hit: bool
    value: Optional[int] = None
    messages: tuple = ()


class LruPolicy:
    """Fully associative LRU over ``capacity`` lines (None = unbounded)."""

    def __init__(self, capacity: Optional[int] = None):
        self.capacity = capacity
        self.order = OrderedDict()

    def touch(self, line):
        self.order[line] = None
        self.order.move_to_end(line)

    def discard(self, line):
        self.order.pop(line, None)

    def victim(self, line, evictable):
        """LRU line that must go before ``line`` can be filled, or None."""
        if self.capacity is None or line in self.order or len(self.order) < self.capacity:
            return None
        for cand in self.order:
            if evictable(cand):
                return cand
        raise BusyLine(f"no evictable victim for line {line}")

    def copy(self):
        new = type(self).__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.order = OrderedDict(self.order)
        return new

    def key(self):
        return tuple(self.order)


class SetAssociativeLru:
    """``sets`` x ``ways`` cache; line index modulo sets picks the set."""

    def __init__(self, sets: int, ways: int):
        self.sets = sets
        self.ways = ways
        self.capacity = sets * ways
        self.order = [OrderedDict() for _ in range(sets)]

    @classmethod
    def from_size(cls, size_bytes: int, ways: int, line_bytes: int = 128):
        return cls(size_bytes // (ways * line_bytes), ways)

    def touch(self, line):
        s = self.order[line % self.sets]
        s[line] = None
        s.move_to_end(line)

    def discard(self, line):
        self.order[line % self.sets].pop(line, None)

    def victim(self, line, evictable):
        s = self.order[line % self.sets]
        if line in s or len(s) < self.ways:
            return None
        for cand in s:
            if evictable(cand):
                return cand
        raise BusyLine(f"no evictable victim in set {line % self.sets}")

    def copy(self):
        new = type(self).__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.order = [OrderedDict(s) for s in self.order]
        return new

    def key(self):
        return tuple(tuple(s) for s in self.order)


class RemoteAgent:
    """Caching agent for lines owned by the home.

    Transaction ids issued here are even; the home uses odd ids.
    ``drop_replies`` is a fault hook: home downgrades of those kinds are
    consumed but never answered.
    """

    def __init__(self, capacity: Optional[int] = None, eviction=None, read_only: bool = False,
                 drop_replies=()):
        self.lines = {}
        self.outstanding = {}
        self.eviction = eviction if eviction is not None else LruPolicy(capacity)
        self.read_only = read_only
        self.drop_replies = frozenset(drop_replies)
        self.next_id = 0
        self.stats = {"hits": 0, "misses": 0, "evictions": 0}

    @property
    def capacity(self):
        return self.eviction.capacity

    def line(self, line: int) -> RemoteLine:
        return self.lines.get(line) or RemoteLine()

    def _entry(self, line: int) -> RemoteLine:
        if line not in self.lines:
            self.lines[line] = RemoteLine()
        return self.lines[line]

    def _new_id(self) -> int:
        tid = self.next_id
        self.next_id += 2
        return tid

    def _tidy(self, line: int):
        ent = self.lines.get(line)
        if ent is not None and ent == RemoteLine():
            del self.lines[line]

    # -- CPU side --------------------------------------------------------

    def cpu_read(self, line: int) -> Access:
        ent = self.line(line)
        if ent.pending is not None:
            raise BusyLine(f"line {line} busy ({ent.pending.value})")
        if ent.state is not RemoteState.I:
            self.eviction.touch(line)
            self.stats["hits"] += 1
            return Access(True, ent.data)
        self.stats["misses"] += 1
        return Access(False, messages=tuple(self._issue(line, K.READ_SHARED)))

    def cpu_write(self, line: int, value: int) -> Access:
        if self.read_only:
            raise WriteUnderReadOnlySubset(f"write to line {line} under a read-only subset")
        ent = self.line(line)
        if ent.pending is not None:
            raise BusyLine(f"line {line} busy ({ent.pending.value})")
        if ent.state in (RemoteState.E, RemoteState.M):
            ent = self._entry(line)
            ent.state, ent.data, ent.dirty = RemoteState.M, value, True
            self.eviction.touch(line)
            self.stats["hits"] += 1
            return Access(True, value)
        self.stats["misses"] += 1
        kind = K.UPGRADE_SHARED_TO_EXCLUSIVE if ent.state is RemoteState.S else K.READ_EXCLUSIVE
        return Access(False, messages=tuple(self._issue(line, kind)))

    def _issue(self, line: int, kind: RequestKind) -> List[CoherenceMessage]:
        out = []
        if kind is not K.UPGRADE_SHARED_TO_EXCLUSIVE:
            victim = self.eviction.victim(line, lambda l: self.line(l).pending is None)
            if victim is not None:
                out.append(self.voluntary_downgrade(victim, RemoteState.I))
                self.stats["evictions"] += 1
        ent = self._entry(line)
        tid = self._new_id()
        ent.pending, ent.pending_id = _PENDING_FOR[kind], tid
        self.outstanding[tid] = line
        self.eviction.touch(line)
        out.append(CoherenceMessage(tid, Role.REQUEST, kind, line))
        return out

    def voluntary_downgrade(self, line: int, target: RemoteState) -> CoherenceMessage:
        ent = self.line(line)
        if ent.pending is not None:
            raise BusyLine(f"line {line} busy ({ent.pending.value})")
        if target not in (RemoteState.S, RemoteState.I) or _RANK[ent.state] <= _RANK[target]:
            raise IllegalDowngrade(f"cannot downgrade line {line} from {ent.state.value} to {target.value}")
        if target is RemoteState.S and ent.state is RemoteState.M:
            raise IllegalDowngrade("M -> S is outside the minimal protocol")
        ent = self._entry(line)
        kind = K.REMOTE_DOWNGRADE_TO_SHARED if target is RemoteState.S else K.REMOTE_DOWNGRADE_TO_INVALID
        data = ent.data if ent.dirty else None
        msg = CoherenceMessage(self._new_id(), Role.REQUEST, kind, line, data, ent.dirty)
        ent.state, ent.dirty = target, False
        if target is RemoteState.I:
            ent.data = None
            self.eviction.discard(line)
        self._tidy(line)
        return msg

    # -- link side -------------------------------------------------------

    def handle(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        if msg.role is Role.REQUEST:
            return self.handle_home_downgrade(msg)
        return self.handle_response(msg)

    def handle_home_downgrade(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        if msg.kind not in (K.HOME_DOWNGRADE_TO_SHARED, K.HOME_DOWNGRADE_TO_INVALID):
            raise ProtocolViolation(f"remote cannot receive {msg.kind.value} requests")
        ent = self.line(msg.line)
        if ent.pending is not None:
            if ent.held is not None:
                raise ProtocolViolation(f"second home downgrade in flight for line {msg.line}")
            self._entry(msg.line).held = msg
            return []
        return self._answer(msg)

    def _answer(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        ent = self._entry(msg.line)
        data = ent.data if ent.dirty else None
        if msg.kind is K.HOME_DOWNGRADE_TO_INVALID or ent.state is RemoteState.I:
            ent.state, ent.data = RemoteState.I, None
            self.eviction.discard(msg.line)
        else:
            ent.state = RemoteState.S
        ent.dirty = False
        self._tidy(msg.line)
        if msg.kind in self.drop_replies:
            return []
        return [msg.reply(data)]

    def handle_response(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        line = self.outstanding.pop(msg.id, None)
        if line is None or line != msg.line:
            raise UnknownTransaction(f"response {msg.kind.value} id={msg.id} line={msg.line}")
        ent = self._entry(line)
        expect = {PendingKind.AWAIT_SHARED_DATA: K.READ_SHARED,
                  PendingKind.AWAIT_EXCLUSIVE_DATA: K.READ_EXCLUSIVE,
                  PendingKind.AWAIT_UPGRADE_ACK: K.UPGRADE_SHARED_TO_EXCLUSIVE}[ent.pending]
        if msg.kind is not expect:
            raise ProtocolViolation(f"expected {expect.value} response, got {msg.kind.value}")
        if msg.kind is K.UPGRADE_SHARED_TO_EXCLUSIVE:
            if msg.has_payload:
                raise ProtocolViolation("upgrade acknowledgement carries a payload")
            ent.state = RemoteState.E
        else:
            if not msg.has_payload:
                raise ProtocolViolation(f"{msg.kind.value} response without payload")
            ent.data = msg.data
            ent.state = RemoteState.S if msg.kind is K.READ_SHARED else RemoteState.E
        ent.pending = ent.pending_id = None
        held, ent.held = ent.held, None
        if held is not None:
            return self._answer(held)
        return []

    # -- introspection ---------------------------------------------------

    def resident(self) -> int:
        return sum(1 for e in self.lines.values() if e.state is not RemoteState.I or e.pending)

    def busy(self, line: int) -> bool:
        return self.line(line).pending is not None

    def clone(self) -> "RemoteAgent":
        new = RemoteAgent.__new__(RemoteAgent)
        new.__dict__.update(self.__dict__)
        new.lines = {l: RemoteLine(*e.__dict__.values()) for l, e in self.lines.items()}
        new.outstanding = dict(self.outstanding)
        new.eviction = self.eviction.copy()
        new.stats = dict(self.stats)
        return new
