"""A small line-oriented language for trace monitors, and its compiler.

    spec pairing
    scope id                  # line | id | global
    initial idle
    accept idle answered      # states allowed at end of stream
    final answered            # reaching one of these retires the instance
    default stay              # stay | violate when no rule matches
    state idle:
      on role=Request kind=ReadShared|ReadExclusive -> requested
      on role=Response -> VIOLATE
    state requested: on role=Response -> answered

Rules in a state are tried in order and the first match wins. A rule may
name several targets (``-> a, b``); the instance then tracks a set of
states, and the compiler turns that into a DFA by subset construction over
the symbol classes the predicates can tell apart. A record is a violation
when no branch survives it; the instance then restarts from ``initial``.
"""

import enum
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .protocol import RequestKind, Role
from .trace import FIELDS, TraceRecord
from .transport import Direction

VIOLATE = "VIOLATE"
EAGER_LIMIT = 50_000

_ENUM_FIELDS = {"kind": RequestKind, "role": Role, "dir": Direction}
_BOOL_FIELDS = {"payload", "dirty"}
_TRUE = {"present", "true", "yes", "1"}
_FALSE = {"absent", "false", "no", "0"}


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


class UnknownField(ParseError):
    pass


class UnreachableState(UserWarning):
    pass


@dataclass(frozen=True)
class Predicate:
    field: str
    values: frozenset
    negated: bool = False

    def matches(self, value) -> bool:
        return (value in self.values) != self.negated


@dataclass
class Rule:
    predicates: Tuple[Predicate, ...]
    targets: Tuple[str, ...]
    lineno: int

    def matches(self, values: Dict[str, object]) -> bool:
        return all(p.matches(values[p.field]) for p in self.predicates)


@dataclass
class NfaSpec:
    name: str = "unnamed"
    scope: str = "line"
    initial: Optional[str] = None
    accept: set = field(default_factory=set)
    final: set = field(default_factory=set)
    violating: set = field(default_factory=lambda: {VIOLATE})
    default: str = "stay"
    states: Dict[str, List[Rule]] = field(default_factory=dict)


@dataclass
class Violation:
    seq: int
    state: str
    record: Optional[TraceRecord]
    spec: str = ""
    reason: str = ""

    def key(self):
        return (self.spec, self.seq, self.state, self.reason,
                self.record.key() if self.record is not None else None)

    def to_json(self):
        return {"spec": self.spec, "seq": self.seq, "state": self.state, "reason": self.reason,
                "record": self.record.to_json() if self.record is not None else None}


def _parse_value(name, text, lineno, col):
    if name in _ENUM_FIELDS:
        try:
            return _ENUM_FIELDS[name](text).value
        except ValueError:
            raise ParseError(f"{text!r} is not a valid {name}", lineno, col) from None
    if name in _BOOL_FIELDS:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ParseError(f"{text!r} is not a valid {name} (use present/absent)", lineno, col)
    try:
        return int(text, 0)
    except ValueError:
        raise ParseError(f"{name} needs an integer, got {text!r}", lineno, col) from None


def _parse_predicate(tok, lineno, col):
    if tok == "*":
        return None
    neg = "!=" in tok
    sep = "!=" if neg else "="
    if sep not in tok:
        raise ParseError(f"expected field=value, got {tok!r}", lineno, col)
    name, _, rhs = tok.partition(sep)
    if name not in FIELDS:
        raise UnknownField(f"unknown field {name!r}", lineno, col)
    if not rhs:
        raise ParseError(f"no value for {name}", lineno, col + len(name) + len(sep))
    vals = frozenset(_parse_value(name, v, lineno, col) for v in rhs.split("|"))
    return Predicate(name, vals, neg)


def _parse_rule(text, lineno, col):
    if not text.startswith("on "):
        raise ParseError(f"expected 'on ...', got {text!r}", lineno, col)
    body, arrow, targets = text[3:].partition("->")
    if not arrow:
        raise ParseError("rule has no '->'", lineno, col + len(text))
    preds = []
    offset = col + 3
    for tok in body.split():
        p = _parse_predicate(tok, lineno, offset + body.index(tok))
        if p is not None:
            preds.append(p)
    names = tuple(t.strip() for t in targets.split(",") if t.strip())
    if not names:
        raise ParseError("rule has no target", lineno, col + len(text))
    return Rule(tuple(preds), names, lineno)


def parse(text: str) -> NfaSpec:
    spec = NfaSpec()
    current = None
    accept_given = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(stripped) + 1
        word, _, rest = stripped.partition(" ")
        rest = rest.strip()
        if word == "spec":
            spec.name = rest or spec.name
        elif word == "scope":
            if rest not in ("line", "id", "global"):
                raise ParseError(f"scope must be line, id or global, not {rest!r}", lineno, col + 6)
            spec.scope = rest
        elif word == "initial":
            spec.initial = rest
        elif word == "accept":
            spec.accept |= set(rest.split())
            accept_given = True
        elif word == "final":
            spec.final |= set(rest.split())
        elif word == "violating":
            spec.violating |= set(rest.split())
        elif word == "default":
            if rest not in ("stay", "violate"):
                raise ParseError(f"default must be stay or violate, not {rest!r}", lineno, col + 8)
            spec.default = rest
        elif word == "state":
            head, colon, inline = rest.partition(":")
            if not colon or not head.strip():
                raise ParseError("expected 'state NAME:'", lineno, col)
            current = head.strip()
            if current in spec.states:
                raise ParseError(f"state {current!r} declared twice", lineno, col + 6)
            spec.states[current] = []
            if inline.strip():
                icol = col + len(stripped) - len(inline.lstrip())
                spec.states[current].append(_parse_rule(inline.strip(), lineno, icol))
        elif word == "on":
            if current is None:
                raise ParseError("rule outside a state block", lineno, col)
            spec.states[current].append(_parse_rule(stripped, lineno, col))
        else:
            raise ParseError(f"unknown directive {word!r}", lineno, col)
    if not spec.states:
        raise ParseError("spec declares no states", max(1, len(text.splitlines())), 1)
    if spec.initial is None:
        spec.initial = next(iter(spec.states))
    known = set(spec.states) | spec.violating
    for name in [spec.initial, *spec.accept, *spec.final]:
        if name not in known:
            raise ParseError(f"undeclared state {name!r}")
    for rules in spec.states.values():
        for r in rules:
            for t in r.targets:
                if t not in known:
                    raise ParseError(f"undeclared target state {t!r}", r.lineno, 1)
    if not accept_given:
        spec.accept = {spec.initial} | spec.final
    return spec


class Automaton:
    """Compiled monitor. DFA states are frozensets of spec states."""

    def __init__(self, spec: NfaSpec):
        self.spec = spec
        self.name = spec.name
        self.scope = spec.scope
        # Per field, the constants any predicate mentions; anything else is class -1.
        consts: Dict[str, set] = {}
        for rules in spec.states.values():
            for r in rules:
                for p in r.predicates:
                    consts.setdefault(p.field, set()).update(p.values)
        self.fields = tuple(sorted(consts))
        self.classes = {f: {v: i for i, v in enumerate(sorted(consts[f], key=repr))} for f in self.fields}
        self.initial = frozenset({spec.initial})
        self.table: Dict[Tuple[frozenset, tuple], Tuple[frozenset, bool]] = {}
        self.warnings: List[str] = []
        size = 1
        for f in self.fields:
            size *= len(self.classes[f]) + 1
        self.alphabet_size = size
        self.eager = size <= EAGER_LIMIT
        self.dfa_states = {self.initial}
        if self.eager:
            self._build()
        self._warn_unreachable()

    # -- symbols -----------------------------------------------------------

    def symbol(self, record: TraceRecord) -> tuple:
        out = []
        for f in self.fields:
            v = getattr(record, f)
            if isinstance(v, enum.Enum):
                v = v.value
            out.append(self.classes[f].get(v, -1))
        return tuple(out)

    def _representative(self, sym) -> Dict[str, object]:
        vals = {}
        for f, idx in zip(self.fields, sym):
            if idx < 0:
                vals[f] = _Other()
            else:
                vals[f] = next(v for v, i in self.classes[f].items() if i == idx)
        return vals

    def _symbols(self):
        ranges = [range(-1, len(self.classes[f])) for f in self.fields]
        return itertools.product(*ranges)

    # -- transitions -------------------------------------------------------

    def _nfa_step(self, state, values):
        for r in self.spec.states.get(state, ()):
            if r.matches(values):
                return set(r.targets)
        return {state} if self.spec.default == "stay" else {VIOLATE}

    def step(self, dstate: frozenset, sym: tuple) -> Tuple[frozenset, bool]:
        """(next DFA state, violated?) for one input symbol."""
        hit = self.table.get((dstate, sym))
        if hit is not None:
            return hit
        values = self._representative(sym)
        nxt = set()
        for q in dstate:
            nxt |= self._nfa_step(q, values)
        alive = frozenset(nxt - self.spec.violating)
        result = (self.initial, True) if not alive else (alive, False)
        self.table[(dstate, sym)] = result
        self.dfa_states.add(result[0])
        return result

    def _build(self):
        todo = [self.initial]
        seen = {self.initial}
        symbols = list(self._symbols())
        while todo:
            d = todo.pop()
            for sym in symbols:
                nxt, _ = self.step(d, sym)
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)

    def _warn_unreachable(self):
        reach = {self.spec.initial}
        todo = [self.spec.initial]
        while todo:
            q = todo.pop()
            targets = {t for r in self.spec.states.get(q, ()) for t in r.targets}
            if self.spec.default == "stay":
                targets.add(q)
            for t in targets - reach:
                reach.add(t)
                todo.append(t)
        for q in self.spec.states:
            if q not in reach:
                text = f"state {q!r} in spec {self.name!r} is unreachable"
                self.warnings.append(text)
                warnings.warn(text, UnreachableState, stacklevel=3)

    # -- runtime -----------------------------------------------------------

    def accepting(self, dstate: frozenset) -> bool:
        return bool(dstate & self.spec.accept)

    def retired(self, dstate: frozenset) -> bool:
        return dstate == self.initial or (bool(self.spec.final) and dstate <= self.spec.final)

    def scope_key(self, record: TraceRecord):
        if self.scope == "line":
            return record.line
        if self.scope == "id":
            return record.id
        return None

    @staticmethod
    def describe(dstate: frozenset) -> str:
        return "|".join(sorted(dstate))


class _Other:
    """Stands for any value no predicate mentions; equal to nothing."""

    def __eq__(self, other):
        return False

    def __hash__(self):
        return 0


def compile_spec(text: str) -> Automaton:
    return Automaton(parse(text))


class Monitor:
    """Streaming checker: feed records one at a time, then call ``finish``.

    Memory holds only the instances that are away from their initial state.
    """

    def __init__(self, automaton: Automaton):
        self.auto = automaton
        self.live: Dict[object, Tuple[frozenset, TraceRecord]] = {}
        self.violations: List[Violation] = []
        self.peak_live = 0

    def feed(self, record: TraceRecord):
        a = self.auto
        key = a.scope_key(record)
        cur = self.live.get(key)
        dstate = cur[0] if cur is not None else a.initial
        nxt, bad = a.step(dstate, a.symbol(record))
        if bad:
            self.violations.append(Violation(record.seq, a.describe(dstate), record, a.name, "violating transition"))
        if a.retired(nxt):
            self.live.pop(key, None)
        else:
            self.live[key] = (nxt, record)
            if len(self.live) > self.peak_live:
                self.peak_live = len(self.live)

    def finish(self) -> List[Violation]:
        a = self.auto
        for key, (dstate, last) in self.live.items():
            if not a.accepting(dstate):
                self.violations.append(Violation(last.seq, a.describe(dstate), last, a.name,
                                                 "incomplete at end of trace"))
        self.live = {}
        return self.violations


def check(automaton: Automaton, trace: Iterable[TraceRecord]) -> List[Violation]:
    mon = Monitor(automaton)
    for rec in trace:
        mon.feed(rec)
    return mon.finish()


def check_all(automata: Iterable[Automaton], trace: Iterable[TraceRecord]) -> List[Violation]:
    records = list(trace)
    out = []
    for a in automata:
        out += check(a, records)
    return sorted(out, key=lambda v: (v.seq, v.spec))
