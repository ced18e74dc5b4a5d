"""Simulated link: virtual channels, parity striping and credit flow control.

Each direction carries 14 VCs. Eight coherence VCs are four message classes
times odd/even line parity; the other six are reserved. Every VC is a FIFO
with its own credit count: a send takes a credit, a delivery returns it.
There is no ordering across VCs.
"""

import enum
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .protocol import CoherenceMessage, Initiator, RequestKind, Role

NUM_VCS = 14


class Direction(enum.Enum):
    HOME_TO_REMOTE = "HomeToRemote"
    REMOTE_TO_HOME = "RemoteToHome"

    @property
    def destination(self) -> Initiator:
        return Initiator.REMOTE if self is Direction.HOME_TO_REMOTE else Initiator.HOME

    @classmethod
    def from_sender(cls, sender: Initiator) -> "Direction":
        return cls.HOME_TO_REMOTE if sender is Initiator.HOME else cls.REMOTE_TO_HOME


class MessageClass(enum.Enum):
    REQUEST = "Request"
    RESPONSE = "Response"
    DATA_RESPONSE = "DataResponse"
    HOME_INITIATED = "HomeInitiated"
    MISC = "Misc"


def message_class(msg: CoherenceMessage) -> MessageClass:
    """Class of a message on the wire.

    Everything the remote sends about a line (its requests, voluntary
    downgrades and answers to home downgrades) shares the request class, so
    the home sees it in the order the remote produced it. A stale answer to a
    home downgrade can then never overtake a later request or write-back.
    """
    if msg.sender is Initiator.REMOTE:
        return MessageClass.REQUEST
    if msg.role is Role.REQUEST:
        return MessageClass.HOME_INITIATED
    return MessageClass.DATA_RESPONSE if msg.has_payload else MessageClass.RESPONSE


def response_class(kind: RequestKind, with_payload: bool) -> MessageClass:
    return message_class(CoherenceMessage(0, Role.RESPONSE, kind, 0,
                                          0 if with_payload else None, with_payload))


def parity(line: int) -> int:
    return line & 1


COHERENCE_CLASSES = (MessageClass.REQUEST, MessageClass.RESPONSE, MessageClass.DATA_RESPONSE,
                     MessageClass.HOME_INITIATED)


@dataclass
class VcMap:
    """(message class, line parity) -> VC id, plus per-VC credit depth."""

    assign: Dict[Tuple[MessageClass, int], int]
    credits: Dict[int, int]

    @classmethod
    def class_separated(cls, credits: int = 4) -> "VcMap":
        assign = {(c, p): 2 * i + p for i, c in enumerate(COHERENCE_CLASSES) for p in (0, 1)}
        return cls(assign, {vc: credits for vc in range(NUM_VCS)})

    @classmethod
    def single_vc(cls, credits: int = 1) -> "VcMap":
        """Everything on VC 0: requests and responses can block each other."""
        assign = {(c, p): 0 for c in COHERENCE_CLASSES for p in (0, 1)}
        return cls(assign, {vc: credits for vc in range(NUM_VCS)})

    def vc_for(self, msg: CoherenceMessage) -> int:
        return self.assign[(message_class(msg), parity(msg.line))]

    def vc_for_class(self, mclass: MessageClass, line: int) -> int:
        return self.assign[(mclass, parity(line))]


class NoCredit(Exception):
    def __init__(self, direction, vc):
        super().__init__(f"no credit on {direction.value} VC {vc}")
        self.direction = direction
        self.vc = vc


@dataclass
class Envelope:
    msg: CoherenceMessage
    direction: Direction
    vc: int
    sent_at: float
    seq: int


@dataclass
class VirtualChannel:
    id: int
    credits: int
    depth: int
    queue: deque = field(default_factory=deque)


@dataclass
class DeadlockReport:
    cycle: List[Tuple[str, int]]
    in_flight: int

    def to_dict(self):
        return {"cycle": [{"dir": d, "vc": v} for d, v in self.cycle], "in_flight": self.in_flight}


class Link:
    """Both directions of the inter-node link.

    ``reorder`` is ``"fifo"`` (deliver the oldest head first, i.e. in global
    send order) or ``"shuffle"`` (pick a random eligible head from a seeded
    RNG). Per-VC FIFO order holds under both.
    """

    def __init__(self, vc_map: Optional[VcMap] = None, reorder: str = "shuffle", seed: int = 0,
                 latency_ns: float = 160.0, class_latency_ns: Optional[Dict[MessageClass, float]] = None):
        if reorder not in ("fifo", "shuffle"):
            raise ValueError(f"unknown reorder policy {reorder!r}")
        self.vc_map = vc_map or VcMap.class_separated()
        self.reorder = reorder
        self.rng = random.Random(seed)
        self.latency_ns = latency_ns
        self.class_latency_ns = class_latency_ns or {}
        self.now = 0.0
        self._seq = 0
        self.channels = {
            d: [VirtualChannel(vc, self.vc_map.credits.get(vc, 1), self.vc_map.credits.get(vc, 1))
                for vc in range(NUM_VCS)]
            for d in Direction
        }

    def channel(self, direction: Direction, vc: int) -> VirtualChannel:
        return self.channels[direction][vc]

    def has_credit(self, direction: Direction, vc: int) -> bool:
        return self.channels[direction][vc].credits > 0

    def send(self, msg: CoherenceMessage, direction: Optional[Direction] = None) -> Envelope:
        direction = direction or Direction.from_sender(msg.sender)
        vc = self.vc_map.vc_for(msg)
        ch = self.channels[direction][vc]
        if ch.credits <= 0:
            raise NoCredit(direction, vc)
        ch.credits -= 1
        env = Envelope(msg, direction, vc, self.now, self._seq)
        self._seq += 1
        ch.queue.append(env)
        return env

    def heads(self) -> List[VirtualChannel]:
        return [ch for d in Direction for ch in self.channels[d] if ch.queue]

    def in_flight(self) -> int:
        return sum(len(ch.queue) for ch in self.heads())

    def pop(self, direction: Direction, vc: int) -> Envelope:
        ch = self.channels[direction][vc]
        env = ch.queue.popleft()
        ch.credits += 1
        lat = self.class_latency_ns.get(message_class(env.msg), self.latency_ns)
        self.now = max(self.now, env.sent_at + lat)
        return env

    def deliver_step(self, eligible: Optional[Callable[[Envelope], bool]] = None):
        """Deliver one head message; returns (destination, message) or None."""
        env = self.deliver_envelope(eligible)
        if env is None:
            return None
        return env.direction.destination, env.msg

    def deliver_envelope(self, eligible: Optional[Callable[[Envelope], bool]] = None) -> Optional[Envelope]:
        ready = [ch for ch in self.heads() if eligible is None or eligible(ch.queue[0])]
        if not ready:
            return None
        if self.reorder == "fifo":
            ch = min(ready, key=lambda c: c.queue[0].seq)
        else:
            ch = self.rng.choice(ready)
        env = ch.queue[0]
        return self.pop(env.direction, ch.id)

    def detect_deadlock(self, waits_on: Callable[[Envelope], Optional[Tuple[Direction, int]]]
                        ) -> Optional[DeadlockReport]:
        """Report a wait-for cycle if no head message can be consumed.

        ``waits_on(env)`` names the VC whose credit the receiver needs before
        it can consume ``env``, or None when it can consume it now.
        """
        heads = self.heads()
        if not heads:
            return None
        edges = {}
        for ch in heads:
            env = ch.queue[0]
            need = waits_on(env)
            if need is None:
                return None
            edges[(env.direction, ch.id)] = need
        start = next(iter(edges))
        path, seen = [], {}
        node = start
        while node in edges and node not in seen:
            seen[node] = len(path)
            path.append(node)
            node = edges[node]
        cycle = path[seen[node]:] if node in seen else path
        return DeadlockReport([(d.value, vc) for d, vc in cycle], self.in_flight())
