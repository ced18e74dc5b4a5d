"""The home node: directory, backing store and per-line ordering point."""

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import BusyLine, ProtocolViolation, UnknownTransaction
from .protocol import (CoherenceMessage, HomeState, JointState, RemoteState, REMOTE_KINDS,
                       RequestKind, Role)

K = RequestKind
H = HomeState


class RemoteView(enum.Enum):
    """What the home knows about the remote copy. E and M are deliberately merged."""

    INVALID = "Invalid"
    SHARED = "Shared"
    EXCLUSIVE_OR_MODIFIED = "ExclusiveOrModified"


class HomeStrategy(enum.Enum):
    HIDDEN_O = "HiddenO"
    WRITE_BACK_ON_SHARE = "WriteBackOnShare"


# Remote requests are only meaningful against one directory view; one that
# arrives early (it overtook a downgrade on another VC) waits for that view.
_NEEDS_VIEW = {
    K.READ_SHARED: {RemoteView.INVALID},
    K.READ_EXCLUSIVE: {RemoteView.INVALID},
    K.UPGRADE_SHARED_TO_EXCLUSIVE: {RemoteView.SHARED},
    K.REMOTE_DOWNGRADE_TO_SHARED: {RemoteView.EXCLUSIVE_OR_MODIFIED},
    K.REMOTE_DOWNGRADE_TO_INVALID: {RemoteView.SHARED, RemoteView.EXCLUSIVE_OR_MODIFIED},
}


@dataclass
class DirectoryEntry:
    home: HomeState = H.I
    remote_view: RemoteView = RemoteView.INVALID
    data: Optional[int] = None  # home-cached copy (version stamp)
    serialized: Optional[int] = None  # id of our in-flight downgrade
    target: Optional[RequestKind] = None
    deferred: tuple = ()

    def key(self):
        return (self.home, self.remote_view, self.data, self.serialized, self.target, self.deferred)


class BackingStore:
    """Line-indexed RAM. Versions per line never go backwards."""

    def __init__(self, initial: Optional[Dict[int, int]] = None, default: int = 0):
        self.values = dict(initial or {})
        self.default = default
        self.writes = 0

    def read(self, line: int) -> int:
        return self.values.get(line, self.default)

    def write(self, line: int, version: int):
        if version < self.read(line):
            raise ProtocolViolation(f"write-back of stale version {version} to line {line}")
        self.values[line] = version
        self.writes += 1

    def copy(self):
        new = BackingStore(self.values, self.default)
        new.writes = self.writes
        return new


@dataclass
class LocalResult:
    done: bool
    value: Optional[int] = None
    messages: tuple = ()


class HomeAgent:
    """Directory-based home for one node's memory.

    Home-initiated downgrades get odd transaction ids. ``drop_replies`` and
    ``drop_forward_reply`` are fault hooks used by mutation tests.
    """

    ENTRY_BYTES = 1

    def __init__(self, strategy: HomeStrategy = HomeStrategy.HIDDEN_O, home_caches: bool = False,
                 store: Optional[BackingStore] = None, receptions=REMOTE_KINDS,
                 drop_replies=(), drop_forward_reply: bool = False):
        self.strategy = HomeStrategy(strategy)
        self.home_caches = home_caches
        self.store = store or BackingStore()
        self.receptions = frozenset(receptions)
        self.drop_replies = frozenset(drop_replies)
        self.drop_forward_reply = drop_forward_reply
        self.entries: Dict[int, DirectoryEntry] = {}
        self.next_id = 1
        self.stats = {"dirty_forwards": 0, "forward_store_writes": 0}

    def entry(self, line: int) -> DirectoryEntry:
        return self.entries.get(line) or DirectoryEntry()

    def _entry(self, line: int) -> DirectoryEntry:
        if line not in self.entries:
            self.entries[line] = DirectoryEntry()
        return self.entries[line]

    def _tidy(self, line):
        if self.entries.get(line) == DirectoryEntry():
            del self.entries[line]

    def directory_bytes(self) -> int:
        return len(self.entries) * self.ENTRY_BYTES

    def joint_view(self, line: int) -> str:
        e = self.entry(line)
        return e.home.value + e.remote_view.value[0]

    # -- remote-initiated -----------------------------------------------

    def handle(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        if msg.role is Role.REQUEST:
            return self.handle_remote_request(msg)
        return self.handle_downgrade_response(msg)

    def handle_remote_request(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        if msg.kind not in self.receptions:
            raise ProtocolViolation(f"{msg.kind.value} is outside the negotiated subset")
        ent = self._entry(msg.line)
        if ent.remote_view not in _NEEDS_VIEW[msg.kind]:
            if msg.kind.reply_required:
                ent.deferred = ent.deferred + (msg,)
                return []
            raise ProtocolViolation(
                f"{msg.kind.value} on line {msg.line} with remote view {ent.remote_view.value}")
        out = self._serve(msg)
        return out + self._drain(msg.line)

    def _serve(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        line, kind = msg.line, msg.kind
        ent = self._entry(line)
        reply = None
        if kind is K.READ_SHARED:
            if ent.home is H.M:
                reply = self._forward_dirty(msg, ent)
            else:
                if ent.home is H.I:
                    data = self.store.read(line)
                    if self.home_caches:
                        ent.home, ent.data = H.S, data
                else:
                    data = ent.data
                    ent.home = H.S
                reply = msg.reply(data)
            ent.remote_view = RemoteView.SHARED
        elif kind is K.READ_EXCLUSIVE:
            data = self.store.read(line) if ent.home is H.I else ent.data
            if ent.home is H.M:
                self.store.write(line, ent.data)
            ent.home, ent.data = H.I, None
            ent.remote_view = RemoteView.EXCLUSIVE_OR_MODIFIED
            reply = msg.reply(data)
        elif kind is K.UPGRADE_SHARED_TO_EXCLUSIVE:
            if ent.home is H.O:
                # remote's clean copy is about to become silently droppable
                self.store.write(line, ent.data)
            ent.home, ent.data = H.I, None
            ent.remote_view = RemoteView.EXCLUSIVE_OR_MODIFIED
            reply = msg.reply()
        elif kind is K.REMOTE_DOWNGRADE_TO_SHARED:
            if msg.has_payload:
                self.store.write(line, msg.data)
            ent.remote_view = RemoteView.SHARED
        else:
            if msg.has_payload:
                self.store.write(line, msg.data)
            if ent.home is H.O:
                ent.home = H.M
            ent.remote_view = RemoteView.INVALID
        self._tidy(line)
        if reply is None or kind in self.drop_replies:
            return []
        return [reply]

    def _forward_dirty(self, msg, ent):
        """MI -> shared: hand the dirty line to the remote."""
        line = msg.line
        self.stats["dirty_forwards"] += 1
        data = ent.data
        if self.strategy is HomeStrategy.HIDDEN_O:
            ent.home = H.O
        else:
            self.store.write(line, data)
            self.stats["forward_store_writes"] += 1
            if self.home_caches:
                ent.home = H.S
            else:
                ent.home, ent.data = H.I, None
        reply = msg.reply(data)
        if self.drop_forward_reply:
            return None
        return reply

    def _drain(self, line) -> List[CoherenceMessage]:
        out = []
        while True:
            ent = self.entry(line)
            ready = [m for m in ent.deferred if ent.remote_view in _NEEDS_VIEW[m.kind]]
            if not ready:
                return out
            msg = ready[0]
            ent.deferred = tuple(m for m in ent.deferred if m is not msg)
            out += self._serve(msg)

    # -- home-initiated --------------------------------------------------

    def initiate_downgrade(self, line: int, target: RemoteState) -> CoherenceMessage:
        ent = self._entry(line)
        if ent.serialized is not None:
            raise BusyLine(f"line {line} already has downgrade {ent.serialized} in flight")
        kind = K.HOME_DOWNGRADE_TO_SHARED if target is RemoteState.S else K.HOME_DOWNGRADE_TO_INVALID
        tid = self.next_id
        self.next_id += 2
        ent.serialized, ent.target = tid, kind
        return CoherenceMessage(tid, Role.REQUEST, kind, line)

    def handle_downgrade_response(self, msg: CoherenceMessage) -> List[CoherenceMessage]:
        ent = self.entries.get(msg.line)
        if ent is None or ent.serialized != msg.id or ent.target is not msg.kind:
            raise UnknownTransaction(f"response {msg.kind.value} id={msg.id} line={msg.line}")
        line = msg.line
        if msg.kind is K.HOME_DOWNGRADE_TO_INVALID:
            if msg.has_payload:
                ent.home, ent.data = H.M, msg.data
            elif ent.home is H.O:
                ent.home = H.M
            elif ent.home is H.S:
                ent.home = H.E
            ent.remote_view = RemoteView.INVALID
        else:
            if msg.has_payload:
                if self.strategy is HomeStrategy.HIDDEN_O:
                    ent.home, ent.data = H.O, msg.data
                else:
                    self.store.write(line, msg.data)
                    if self.home_caches:
                        ent.home, ent.data = H.S, msg.data
                ent.remote_view = RemoteView.SHARED
            elif ent.remote_view is not RemoteView.INVALID:
                ent.remote_view = RemoteView.SHARED
                if ent.home is H.E:
                    ent.home = H.S
        ent.serialized = ent.target = None
        out = self._drain(line)
        self._tidy(line)
        return out

    # -- home-side CPU/accelerator accesses ------------------------------

    def local_access(self, line: int, write: bool = False, value: Optional[int] = None) -> LocalResult:
        ent = self.entry(line)
        if ent.serialized is not None:
            raise BusyLine(f"line {line} busy")
        if write:
            if ent.remote_view is not RemoteView.INVALID:
                return LocalResult(False, messages=(self.initiate_downgrade(line, RemoteState.I),))
            ent = self._entry(line)
            ent.home, ent.data = H.M, value
            return LocalResult(True, value)
        if ent.remote_view is RemoteView.EXCLUSIVE_OR_MODIFIED:
            return LocalResult(False, messages=(self.initiate_downgrade(line, RemoteState.S),))
        if ent.home is not H.I:
            return LocalResult(True, ent.data)
        data = self.store.read(line)
        if self.home_caches:
            ent = self._entry(line)
            ent.home = H.S if ent.remote_view is RemoteView.SHARED else H.E
            ent.data = data
        return LocalResult(True, data)

    def evict(self, line: int):
        """Drop the home's own copy, writing it back if dirty."""
        ent = self.entry(line)
        if ent.serialized is not None:
            raise BusyLine(f"line {line} busy")
        if ent.home in (H.M, H.O):
            self.store.write(line, ent.data)
        if ent.home is not H.I:
            ent = self._entry(line)
            ent.home, ent.data = H.I, None
            self._tidy(line)

    def readable_value(self, line: int) -> Optional[int]:
        """What a local read would return right now, or None if it must wait."""
        ent = self.entry(line)
        if ent.serialized is not None or ent.remote_view is RemoteView.EXCLUSIVE_OR_MODIFIED:
            return None
        return ent.data if ent.home is not H.I else self.store.read(line)

    def busy(self, line: int) -> bool:
        return self.entry(line).serialized is not None

    def clone(self) -> "HomeAgent":
        new = HomeAgent.__new__(HomeAgent)
        new.__dict__.update(self.__dict__)
        new.entries = {l: DirectoryEntry(*e.__dict__.values()) for l, e in self.entries.items()}
        new.store = self.store.copy()
        new.stats = dict(self.stats)
        return new


def joint_state(home: HomeAgent, remote, line: int) -> JointState:
    """Observable joint state of a line from the two agents' stable states."""
    return JointState.of(home.entry(line).home, remote.line(line).state)
