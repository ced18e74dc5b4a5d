"""Stable states, the joint-state distance order, and signalled-transition rules.

Everything in this module is pure: value types plus functions over them.
Agents, the transport and the checkers all build on these definitions.
"""

import enum
import itertools
from dataclasses import dataclass
from typing import Optional

LINE_BYTES = 128


class HomeState(enum.Enum):
    M = "M"
    O = "O"  # internal only, never signalled
    E = "E"
    S = "S"
    I = "I"

    @property
    def observable(self) -> "HomeState":
        # Dirty-and-shared must look exactly like clean-shared to the remote.
        return HomeState.S if self is HomeState.O else self


class RemoteState(enum.Enum):
    M = "M"
    E = "E"
    S = "S"
    I = "I"


class JointState(enum.Enum):
    """Allowable (home, remote) pairs, written home first."""

    MI = "MI"
    IM = "IM"
    EI = "EI"
    IE = "IE"
    SS = "SS"
    SI = "SI"
    IS = "IS"
    II = "II"

    @property
    def home(self) -> HomeState:
        return HomeState(self.value[0])

    @property
    def remote(self) -> RemoteState:
        return RemoteState(self.value[1])

    @classmethod
    def of(cls, home: HomeState, remote: RemoteState) -> "JointState":
        """Joint state for a pair of node states; O is folded to S.

        Raises ValueError for pairs outside the eight allowable ones.
        """
        return cls(home.observable.value + remote.value)


class Ordering(enum.Enum):
    LESS = "Less"
    GREATER = "Greater"
    EQUAL = "Equal"
    INCOMPARABLE = "Incomparable"


class TransitionClass(enum.Enum):
    UPGRADE = "Upgrade"
    DOWNGRADE = "Downgrade"
    SILENT_LOCAL = "SilentLocal"
    EXCEPTION10 = "Exception10"
    ILLEGAL = "Illegal"


class Initiator(enum.Enum):
    HOME = "Home"
    REMOTE = "Remote"


class Role(enum.Enum):
    REQUEST = "Request"
    RESPONSE = "Response"


class RequestKind(enum.Enum):
    READ_SHARED = "ReadShared"
    READ_EXCLUSIVE = "ReadExclusive"
    UPGRADE_SHARED_TO_EXCLUSIVE = "UpgradeSharedToExclusive"
    REMOTE_DOWNGRADE_TO_SHARED = "RemoteDowngradeToShared"
    REMOTE_DOWNGRADE_TO_INVALID = "RemoteDowngradeToInvalid"
    HOME_DOWNGRADE_TO_SHARED = "HomeDowngradeToShared"
    HOME_DOWNGRADE_TO_INVALID = "HomeDowngradeToInvalid"

    @property
    def initiator(self) -> Initiator:
        return _TABLE[self][0]

    @property
    def transition_class(self) -> TransitionClass:
        return _TABLE[self][1]

    @property
    def reply_required(self) -> bool:
        return _TABLE[self][3]


# kind: (initiator, class, request payload, reply required, reply payload)
# Payload cells are "yes", "no" or "dirty" (present iff the sender's copy is dirty).
_TABLE = {
    RequestKind.READ_SHARED: (Initiator.REMOTE, TransitionClass.UPGRADE, "no", True, "yes"),
    RequestKind.READ_EXCLUSIVE: (Initiator.REMOTE, TransitionClass.UPGRADE, "no", True, "yes"),
    RequestKind.UPGRADE_SHARED_TO_EXCLUSIVE: (Initiator.REMOTE, TransitionClass.UPGRADE, "no", True, "no"),
    RequestKind.REMOTE_DOWNGRADE_TO_SHARED: (Initiator.REMOTE, TransitionClass.DOWNGRADE, "dirty", False, "no"),
    RequestKind.REMOTE_DOWNGRADE_TO_INVALID: (Initiator.REMOTE, TransitionClass.DOWNGRADE, "dirty", False, "no"),
    RequestKind.HOME_DOWNGRADE_TO_SHARED: (Initiator.HOME, TransitionClass.DOWNGRADE, "no", True, "dirty"),
    RequestKind.HOME_DOWNGRADE_TO_INVALID: (Initiator.HOME, TransitionClass.DOWNGRADE, "no", True, "dirty"),
}

REMOTE_KINDS = frozenset(k for k in RequestKind if k.initiator is Initiator.REMOTE)
HOME_KINDS = frozenset(k for k in RequestKind if k.initiator is Initiator.HOME)
VOLUNTARY_KINDS = frozenset({RequestKind.REMOTE_DOWNGRADE_TO_SHARED,
                             RequestKind.REMOTE_DOWNGRADE_TO_INVALID})


@dataclass(frozen=True)
class MessageRule:
    request_payload: bool
    reply_required: bool
    reply_payload: bool


def message_rules(kind: RequestKind, dirty: bool) -> MessageRule:
    _, _, req, reply, resp = _TABLE[kind]
    return MessageRule(
        request_payload=req == "yes" or (req == "dirty" and dirty),
        reply_required=reply,
        reply_payload=resp == "yes" or (resp == "dirty" and dirty),
    )


@dataclass(frozen=True)
class CoherenceMessage:
    """One request or response on the link.

    ``data`` is the payload version stamp (the payload is modelled as an opaque
    128-byte value identified by its version); ``None`` means no payload.
    ``dirty`` is carried separately so that a malformed message, where it
    disagrees with payload presence, can be flagged by the checkers.
    """

    id: int
    role: Role
    kind: RequestKind
    line: int
    data: Optional[int] = None
    dirty: bool = False

    @property
    def has_payload(self) -> bool:
        return self.data is not None

    @property
    def sender(self) -> Initiator:
        if self.role is Role.REQUEST:
            return self.kind.initiator
        return Initiator.HOME if self.kind.initiator is Initiator.REMOTE else Initiator.REMOTE

    def reply(self, data: Optional[int] = None) -> "CoherenceMessage":
        return CoherenceMessage(self.id, Role.RESPONSE, self.kind, self.line, data, data is not None)


def well_formed(msg: CoherenceMessage) -> bool:
    """True when payload presence and the dirty flag obey the rules for its kind."""
    if msg.dirty != msg.has_payload:
        return False
    _, _, req, _, resp = _TABLE[msg.kind]
    cell = req if msg.role is Role.REQUEST else resp
    if msg.role is Role.RESPONSE and not msg.kind.reply_required:
        return False
    if cell == "yes":
        return msg.has_payload
    if cell == "no":
        return not msg.has_payload
    return True


# ---------------------------------------------------------------------------
# The distance order.  Single source of truth: the edge list below.  Every
# edge goes from the lower to the higher state; the order is its transitive
# closure.  "dotted" edges are local to one node and invisible to the other.

J = JointState
EDGES = (
    # lower, upper, dotted
    (J.II, J.SI, True),
    (J.II, J.IS, False),
    (J.SI, J.SS, False),
    (J.IS, J.SS, True),
    (J.SS, J.EI, False),
    (J.SS, J.IE, False),
    (J.EI, J.MI, True),
    (J.IE, J.IM, True),
)

# Edges that may only be travelled upward (dirty -> clean must go via the home).
UPWARD_ONLY = frozenset({(J.IM, J.IE)})


def _closure():
    above = {s: set() for s in JointState}
    for lo, hi, _ in EDGES:
        above[lo].add(hi)
    changed = True
    while changed:
        changed = False
        for s in JointState:
            extra = set().union(*(above[t] for t in above[s])) - above[s]
            if extra:
                above[s] |= extra
                changed = True
    return {s: frozenset(v) for s, v in above.items()}


_ABOVE = _closure()


def compare_distance(a: JointState, b: JointState) -> Ordering:
    if a is b:
        return Ordering.EQUAL
    if b in _ABOVE[a]:
        return Ordering.LESS
    if a in _ABOVE[b]:
        return Ordering.GREATER
    return Ordering.INCOMPARABLE


def is_remote_distinguishable(a: JointState, b: JointState) -> bool:
    """Whether the remote can tell the two joint states apart.

    Home-only differences are invisible to the remote: *I = {II, SI, EI, MI}
    and *S = {SS, IS}.
    """
    return a.remote is not b.remote


def is_home_distinguishable(a: JointState, b: JointState) -> bool:
    # E -> M at the remote is silent, so IE and IM look the same from home.
    if {a, b} == {J.IE, J.IM}:
        return False
    return a is not b


def classify_transition(src: JointState, dst: JointState) -> TransitionClass:
    if (src, dst) in {(J.MI, J.SI), (J.MI, J.IS)}:
        return TransitionClass.EXCEPTION10
    order = compare_distance(src, dst)
    if order in (Ordering.EQUAL, Ordering.INCOMPARABLE) or (src, dst) in UPWARD_ONLY:
        return TransitionClass.ILLEGAL
    if not is_remote_distinguishable(src, dst) or not is_home_distinguishable(src, dst):
        return TransitionClass.SILENT_LOCAL
    return TransitionClass.UPGRADE if order is Ordering.LESS else TransitionClass.DOWNGRADE


# Numbered transitions and the joint-state moves each one covers. Moves 8
# and 9 out of IM land in a state the distance order does not relate to IM;
# agents realise those as a remote step followed by a home step.
TRANSITIONS = {
    1: ((J.II, J.IS), (J.SI, J.SS)),
    2: ((J.II, J.IE),),
    3: ((J.IS, J.IE), (J.SS, J.IE)),
    4: ((J.IM, J.II),),
    5: ((J.IE, J.II),),
    6: ((J.IE, J.II), (J.IS, J.II), (J.SS, J.SI)),
    7: ((J.IE, J.IS),),
    8: ((J.SS, J.EI), (J.IS, J.II), (J.IE, J.II), (J.IM, J.MI)),
    9: ((J.IE, J.IS), (J.IM, J.SS)),
    10: ((J.MI, J.SI), (J.MI, J.IS)),
}

TRANSITION_KIND = {
    1: RequestKind.READ_SHARED,
    2: RequestKind.READ_EXCLUSIVE,
    3: RequestKind.UPGRADE_SHARED_TO_EXCLUSIVE,
    4: RequestKind.REMOTE_DOWNGRADE_TO_INVALID,
    5: RequestKind.REMOTE_DOWNGRADE_TO_INVALID,
    6: RequestKind.REMOTE_DOWNGRADE_TO_INVALID,
    7: RequestKind.REMOTE_DOWNGRADE_TO_SHARED,
    8: RequestKind.HOME_DOWNGRADE_TO_INVALID,
    9: RequestKind.HOME_DOWNGRADE_TO_SHARED,
    10: RequestKind.READ_SHARED,
}


def silent_edges():
    """All (src, dst) pairs that classify as SilentLocal."""
    return [(a, b) for a, b in itertools.permutations(JointState, 2)
            if classify_transition(a, b) is TransitionClass.SILENT_LOCAL]
