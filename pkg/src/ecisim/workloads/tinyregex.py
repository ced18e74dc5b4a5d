"""A small regex dialect, two ways.

Syntax: literals, ``.``, ``*``, ``+``, ``?``, bracket classes (``[abc]``,
``[^a-z]``), ``^`` (first) and ``$`` (last), and the escapes ``\\d \\w \\s``
with their upper-case complements. No groups or alternation.

``BacktrackMatcher`` searches the way a CPU library does, counting atom
tests as steps. ``Dfa`` compiles the same pattern into a byte-indexed
transition table and runs whole columns of rows at once with numpy, one
character per row per step, stopping rows early once decided.
"""

import string
from dataclasses import dataclass
from typing import FrozenSet, List, Tuple

import numpy as np

ALL = frozenset(range(1, 256))
DIGITS = frozenset(map(ord, string.digits))
WORD = frozenset(map(ord, string.ascii_letters + string.digits + "_"))
SPACE = frozenset(map(ord, " \t\n\r\f\v"))
_ESCAPES = {"d": DIGITS, "w": WORD, "s": SPACE,
            "D": ALL - DIGITS, "W": ALL - WORD, "S": ALL - SPACE}


class UnsupportedPattern(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    chars: FrozenSet[int]
    quant: str = ""  # "", "*", "?"; "+" is expanded to "x x*"


@dataclass(frozen=True)
class Pattern:
    source: str
    atoms: Tuple[Atom, ...]
    anchored_start: bool
    anchored_end: bool


def _parse_class(src, i):
    """Parse a bracket class starting after '['; returns (charset, next index)."""
    negate = i < len(src) and src[i] == "^"
    if negate:
        i += 1
    chars = set()
    first = True
    while i < len(src) and (src[i] != "]" or first):
        first = False
        c = src[i]
        if c == "\\" and i + 1 < len(src):
            esc = src[i + 1]
            chars |= _ESCAPES.get(esc, {ord(esc)})
            i += 2
            continue
        if i + 2 < len(src) and src[i + 1] == "-" and src[i + 2] != "]":
            lo, hi = ord(c), ord(src[i + 2])
            if lo > hi:
                raise UnsupportedPattern(f"bad range {c}-{src[i + 2]}")
            chars |= set(range(lo, hi + 1))
            i += 3
            continue
        chars.add(ord(c))
        i += 1
    if i >= len(src):
        raise UnsupportedPattern("unterminated bracket class")
    cs = frozenset(chars) & ALL
    return (ALL - cs if negate else cs), i + 1


def parse(src: str) -> Pattern:
    atoms: List[Atom] = []
    i = 0
    start = src.startswith("^")
    if start:
        i = 1
    end = False
    while i < len(src):
        c = src[i]
        if c == "$":
            if i != len(src) - 1:
                raise UnsupportedPattern("'$' is only supported at the end")
            end = True
            i += 1
            continue
        if c == "^":
            raise UnsupportedPattern("'^' is only supported at the start")
        if c in "*+?":
            raise UnsupportedPattern(f"quantifier {c!r} without an atom at {i}")
        if c in "()|{}":
            raise UnsupportedPattern(f"{c!r} at {i}: groups, alternation and counted repeats are not supported")
        if c == ".":
            chars, i = ALL, i + 1
        elif c == "[":
            chars, i = _parse_class(src, i + 1)
        elif c == "\\":
            if i + 1 >= len(src):
                raise UnsupportedPattern("trailing backslash")
            esc = src[i + 1]
            chars, i = _ESCAPES.get(esc, frozenset({ord(esc)})), i + 2
        else:
            chars, i = frozenset({ord(c)}), i + 1
        q = ""
        if i < len(src) and src[i] in "*+?":
            q = src[i]
            i += 1
            if i < len(src) and src[i] in "*+?":
                raise UnsupportedPattern("stacked quantifiers")
        if q == "+":
            atoms += [Atom(chars), Atom(chars, "*")]
        else:
            atoms.append(Atom(chars, q))
    return Pattern(src, tuple(atoms), start, end)


class BacktrackMatcher:
    """Leftmost search with greedy quantifiers and full backtracking."""

    def __init__(self, pattern):
        self.p = pattern if isinstance(pattern, Pattern) else parse(pattern)
        self.steps = 0

    def search(self, text: bytes) -> bool:
        if self.p.anchored_start:
            return self._at(0, text, 0)
        for i in range(len(text) + 1):
            if self._at(0, text, i):
                return True
        return False

    def _at(self, p, text, i):
        atoms = self.p.atoms
        n = len(text)
        while True:
            if p == len(atoms):
                return not self.p.anchored_end or i == n
            a = atoms[p]
            if a.quant == "*":
                j = i
                while j < n:
                    self.steps += 1
                    if text[j] not in a.chars:
                        break
                    j += 1
                for k in range(j, i - 1, -1):
                    if self._at(p + 1, text, k):
                        return True
                return False
            if a.quant == "?":
                if i < n:
                    self.steps += 1
                    if text[i] in a.chars and self._at(p + 1, text, i + 1):
                        return True
                return self._at(p + 1, text, i)
            if i >= n:
                return False
            self.steps += 1
            if text[i] not in a.chars:
                return False
            p += 1
            i += 1


class Dfa:
    """Subset-constructed DFA over pattern positions."""

    def __init__(self, pattern):
        self.p = pattern if isinstance(pattern, Pattern) else parse(pattern)
        atoms = self.p.atoms
        n = len(atoms)

        def closure(ps):
            out = set(ps)
            todo = list(ps)
            while todo:
                q = todo.pop()
                if q < n and atoms[q].quant in ("*", "?") and q + 1 not in out:
                    out.add(q + 1)
                    todo.append(q + 1)
            return frozenset(out)

        start = closure({0})
        ids = {frozenset(): 0, start: 1}
        order = [frozenset(), start]
        rows = []
        i = 0
        while i < len(order):
            cur = order[i]
            row = np.zeros(256, dtype=np.int32)
            for c in range(1, 256):
                nxt = set()
                for q in cur:
                    if q < n and c in atoms[q].chars:
                        nxt.add(q if atoms[q].quant == "*" else q + 1)
                if not self.p.anchored_start and cur:
                    nxt |= start
                nxt = closure(nxt) if nxt else frozenset()
                if nxt not in ids:
                    ids[nxt] = len(order)
                    order.append(nxt)
                row[c] = ids[nxt]
            rows.append(row)
            i += 1
        self.table = np.stack(rows)
        self.accepting = np.array([n in s for s in order], dtype=bool)
        self.start = 1
        self.dead = 0
        self.states = len(order)

    def run(self, text: np.ndarray, lengths: np.ndarray):
        """(match flags, characters examined) for each row of a (rows, width) byte array."""
        rows, width = text.shape
        state = np.full(rows, self.start, dtype=np.int32)
        examined = np.zeros(rows, dtype=np.int32)
        sticky = not self.p.anchored_end
        matched = np.zeros(rows, dtype=bool)
        if sticky and self.accepting[self.start]:
            matched[:] = True
        live = ~matched
        for col in range(width):
            act = live & (col < lengths)
            if not act.any():
                break
            idx = np.flatnonzero(act)
            state[idx] = self.table[state[idx], text[idx, col]]
            examined[idx] += 1
            if sticky:
                hit = self.accepting[state[idx]]
                matched[idx[hit]] = True
                live[idx[hit]] = False
            live[idx[state[idx] == self.dead]] = False
        if not sticky:
            matched = self.accepting[state] & (state != self.dead)
        return matched, examined


def text_columns(texts) -> Tuple[np.ndarray, np.ndarray]:
    """Byte matrix and lengths for an array of fixed-width byte strings."""
    arr = np.asarray(texts)
    width = arr.dtype.itemsize
    mat = np.frombuffer(arr.tobytes(), dtype=np.uint8).reshape(len(arr), width)
    nz = mat == 0
    lengths = np.where(nz.any(axis=1), nz.argmax(axis=1), width).astype(np.int32)
    return mat, lengths


def sample_match(pattern, rng, max_repeat: int = 3, alphabet: bytes = None) -> bytes:
    """A string the pattern matches (the part that matches, without context)."""
    p = pattern if isinstance(pattern, Pattern) else parse(pattern)
    pool = sorted(set(alphabet) if alphabet else set(range(32, 127)))
    out = bytearray()
    for a in p.atoms:
        choices = [c for c in pool if c in a.chars] or sorted(a.chars)
        if a.quant == "*":
            k = int(rng.integers(0, max_repeat + 1))
        elif a.quant == "?":
            k = int(rng.integers(0, 2))
        else:
            k = 1
        for _ in range(k):
            out.append(choices[int(rng.integers(0, len(choices)))])
    return bytes(out)
