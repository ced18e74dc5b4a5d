"""Builtin monitor specs and trace fault injectors."""

import random
from dataclasses import replace
from typing import Iterable, List

from .nfa import Automaton, compile_spec
from .protocol import HOME_KINDS, REMOTE_KINDS, RequestKind, Role
from .trace import TraceRecord
from .transport import Direction

PAYLOAD_RULES = """\
spec payload-rules
scope global
state ok:
  on payload=present dirty=no -> VIOLATE
  on payload=absent dirty=yes -> VIOLATE
  on role=Request kind=ReadShared|ReadExclusive|UpgradeSharedToExclusive payload=present -> VIOLATE
  on role=Request kind=HomeDowngradeToShared|HomeDowngradeToInvalid payload=present -> VIOLATE
  on role=Response kind=ReadShared|ReadExclusive payload=absent -> VIOLATE
  on role=Response kind=UpgradeSharedToExclusive payload=present -> VIOLATE
"""

PAIRING = """\
spec pairing
scope id
initial idle
final answered
state idle:
  on role=Request kind=RemoteDowngradeToShared|RemoteDowngradeToInvalid -> idle
  on role=Request -> requested
  on role=Response -> VIOLATE
state requested:
  on role=Response -> answered
  on role=Request -> VIOLATE
state answered: on * -> VIOLATE
"""

VOLUNTARY_NO_REPLY = """\
spec voluntary-no-reply
scope global
state ok:
  on role=Response kind=RemoteDowngradeToShared|RemoteDowngradeToInvalid -> VIOLATE
"""

# The remote's stable state per line, as told by the messages it sends and
# the grants it receives. A remote message that does not move the line to a
# different state (a request for something it already holds) is flagged.
SIGNALLING = """\
spec signalling
scope line
initial inv
accept inv shr exc
state inv:
  on dir=HomeToRemote role=Request -> inv
  on dir=RemoteToHome role=Response -> inv
  on dir=RemoteToHome kind=ReadShared -> wait_s
  on dir=RemoteToHome kind=ReadExclusive -> wait_e
  on * -> VIOLATE
state shr:
  on dir=HomeToRemote role=Request -> shr
  on dir=RemoteToHome role=Response kind=HomeDowngradeToInvalid -> inv
  on dir=RemoteToHome role=Response kind=HomeDowngradeToShared -> shr
  on dir=RemoteToHome kind=UpgradeSharedToExclusive -> wait_e
  on dir=RemoteToHome kind=RemoteDowngradeToInvalid -> inv
  on * -> VIOLATE
state exc:
  on dir=HomeToRemote role=Request -> exc
  on dir=RemoteToHome role=Response kind=HomeDowngradeToInvalid -> inv
  on dir=RemoteToHome role=Response kind=HomeDowngradeToShared -> shr
  on dir=RemoteToHome kind=RemoteDowngradeToShared -> shr
  on dir=RemoteToHome kind=RemoteDowngradeToInvalid -> inv
  on * -> VIOLATE
state wait_s:
  on dir=HomeToRemote role=Request -> wait_s
  on dir=HomeToRemote role=Response kind=ReadShared -> shr
  on dir=RemoteToHome role=Response -> wait_s
  on * -> VIOLATE
state wait_e:
  on dir=HomeToRemote role=Request -> wait_e
  on dir=HomeToRemote role=Response kind=ReadExclusive|UpgradeSharedToExclusive -> exc
  on dir=RemoteToHome role=Response -> wait_e
  on * -> VIOLATE
"""

BUILTIN_TEXT = {
    "payload-rules": PAYLOAD_RULES,
    "pairing": PAIRING,
    "signalling": SIGNALLING,
    "voluntary-no-reply": VOLUNTARY_NO_REPLY,
}


def subset_spec_text(remote_initiations: Iterable[RequestKind] = REMOTE_KINDS,
                     home_initiations: Iterable[RequestKind] = HOME_KINDS,
                     name: str = "subset-conformance") -> str:
    """A monitor that flags any request kind outside the declared subset."""
    remote = set(remote_initiations)
    home = set(home_initiations)
    lines = [f"spec {name}", "scope global", "state ok:"]
    bad_r = sorted(k.value for k in REMOTE_KINDS - remote)
    bad_h = sorted(k.value for k in HOME_KINDS - home)
    if bad_r:
        lines.append(f"  on dir=RemoteToHome role=Request kind={'|'.join(bad_r)} -> VIOLATE")
    if bad_h:
        lines.append(f"  on dir=HomeToRemote role=Request kind={'|'.join(bad_h)} -> VIOLATE")
    if not bad_r and not bad_h:
        lines.append("  on * -> ok")
    return "\n".join(lines) + "\n"


_cache = {}


def builtin(name: str) -> Automaton:
    if name not in _cache:
        _cache[name] = compile_spec(BUILTIN_TEXT[name])
    return _cache[name]


def builtin_automata(subset=None) -> List[Automaton]:
    """All builtin monitors; ``subset`` (a ProtocolSubset pair) adds a conformance one."""
    out = [builtin(n) for n in BUILTIN_TEXT]
    if subset is not None:
        remote, home = subset
        out.append(compile_spec(subset_spec_text(remote.initiations, home.initiations)))
    else:
        out.append(compile_spec(subset_spec_text()))
    return out


# -- fault injection ---------------------------------------------------------

FAULTS = ("dropped-reply", "spurious-payload", "duplicate-reply", "out-of-subset", "reply-to-nothing")


def _renumber(records):
    return [replace(r, seq=i) for i, r in enumerate(records)]


def inject(records: List[TraceRecord], fault: str, seed: int = 0) -> List[TraceRecord]:
    """A copy of ``records`` with one fault of the given type applied.

    Raises ValueError when the trace has no place to put that fault.
    """
    rng = random.Random(seed)
    recs = list(records)

    def pick(pred):
        idx = [i for i, r in enumerate(recs) if pred(r)]
        if not idx:
            raise ValueError(f"trace has no site for fault {fault!r}")
        return rng.choice(idx)

    if fault == "dropped-reply":
        i = pick(lambda r: r.role is Role.RESPONSE)
        del recs[i]
    elif fault == "spurious-payload":
        i = pick(lambda r: r.role is Role.REQUEST and r.kind is RequestKind.READ_SHARED)
        recs[i] = replace(recs[i], payload=True, dirty=True, version=recs[i].version or 1)
    elif fault == "duplicate-reply":
        i = pick(lambda r: r.role is Role.RESPONSE)
        recs.insert(i + 1, recs[i])
    elif fault == "out-of-subset":
        i = pick(lambda r: r.role is Role.REQUEST and r.kind is RequestKind.READ_SHARED)
        recs[i] = replace(recs[i], kind=RequestKind.READ_EXCLUSIVE)
    elif fault == "reply-to-nothing":
        used = {r.id for r in recs}
        tid = max(used, default=0) + 2
        i = rng.randrange(len(recs) + 1)
        last = recs[i - 1] if i else None
        rec = TraceRecord(0, last.time_ns if last else 0, Direction.HOME_TO_REMOTE, 2,
                          RequestKind.READ_SHARED, Role.RESPONSE, tid,
                          last.line if last else 0, True, True, 1)
        recs.insert(i, rec)
    else:
        raise ValueError(f"unknown fault {fault!r}")
    return _renumber(recs)
