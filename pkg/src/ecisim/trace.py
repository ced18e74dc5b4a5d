"""Trace records and their two on-disk encodings.

JSON lines: one object per line with fields
``seq,time_ns,dir,vc,kind,role,id,line,payload,dirty,version``; unknown
fields are kept in ``extra`` and written back out.

Binary: ``b"ECIT"`` + u16 format version, then fixed 40-byte little-endian
records (u64 seq, u64 time, u8 dir, u8 vc, u8 kind, u8 role, u32 id,
u64 line, u8 payload, u8 dirty, u32 version, 2 pad bytes).
"""

import json
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, List

from .protocol import CoherenceMessage, RequestKind, Role
from .transport import Direction

MAGIC = b"ECIT"
FORMAT_VERSION = 1
FIELDS = ("seq", "time_ns", "dir", "vc", "kind", "role", "id", "line", "payload", "dirty", "version")

_RECORD = struct.Struct("<QQBBBBIQBBI2x")
assert _RECORD.size == 40
_HEADER = struct.Struct("<4sH")
# byte offset of each field inside a binary record
_OFFSETS = (("seq", 0), ("time_ns", 8), ("dir", 16), ("vc", 17), ("kind", 18), ("role", 19),
            ("id", 20), ("line", 24), ("payload", 32), ("dirty", 33), ("version", 34), ("pad", 38))

_KINDS = list(RequestKind)
_ROLES = list(Role)
_DIRS = list(Direction)


class MalformedRecord(ValueError):
    def __init__(self, offset: int, field_name: str, reason: str = ""):
        super().__init__(f"malformed record at byte {offset}, field {field_name!r}"
                         + (f": {reason}" if reason else ""))
        self.offset = offset
        self.field = field_name


@dataclass(frozen=True)
class TraceRecord:
    seq: int
    time_ns: int
    dir: Direction
    vc: int
    kind: RequestKind
    role: Role
    id: int
    line: int
    payload: bool
    dirty: bool
    version: int
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def from_message(cls, seq, time_ns, direction, vc, msg: CoherenceMessage):
        return cls(seq, int(time_ns), direction, vc, msg.kind, msg.role, msg.id, msg.line,
                   msg.has_payload, msg.dirty, msg.data if msg.data is not None else 0)

    def get(self, name):
        return getattr(self, name)

    def to_json(self) -> dict:
        d = {"seq": self.seq, "time_ns": self.time_ns, "dir": self.dir.value, "vc": self.vc,
             "kind": self.kind.value, "role": self.role.value, "id": self.id, "line": self.line,
             "payload": self.payload, "dirty": self.dirty, "version": self.version}
        for k, v in self.extra.items():
            d.setdefault(k, v)
        return d

    def __eq__(self, other):
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return (self.key() == other.key()) and self.extra == other.extra

    def __hash__(self):
        return hash(self.key())

    def key(self):
        return tuple(getattr(self, f) for f in FIELDS)


def normalized(records: Iterable[TraceRecord]) -> List[TraceRecord]:
    """Records with timestamps zeroed, for schedule-level comparisons."""
    return [replace(r, time_ns=0) for r in records]


# -- JSON lines --------------------------------------------------------------

def _parse_field(name, value):
    if name == "dir":
        return Direction(value)
    if name == "kind":
        return RequestKind(value)
    if name == "role":
        return Role(value)
    if name in ("payload", "dirty"):
        if not isinstance(value, bool):
            raise ValueError("expected a boolean")
        return value
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ValueError("expected a non-negative integer")
    return value


def encode_jsonl(records: Iterable[TraceRecord]) -> bytes:
    return b"".join(json.dumps(r.to_json(), separators=(",", ":")).encode() + b"\n"
                    for r in records)


def decode_jsonl(data: bytes) -> List[TraceRecord]:
    out = []
    offset = 0
    for raw in data.splitlines(keepends=True):
        text = raw.strip()
        if text:
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as e:
                raise MalformedRecord(offset + e.pos, "<json>", e.msg) from None
            if not isinstance(obj, dict):
                raise MalformedRecord(offset, "<json>", "record is not an object")
            vals = {}
            for name in FIELDS:
                if name not in obj:
                    raise MalformedRecord(offset, name, "missing")
                try:
                    vals[name] = _parse_field(name, obj[name])
                except ValueError as e:
                    raise MalformedRecord(offset, name, str(e)) from None
            extra = {k: v for k, v in obj.items() if k not in FIELDS}
            out.append(TraceRecord(**vals, extra=extra))
        offset += len(raw)
    return out


# -- binary ------------------------------------------------------------------

def encode_binary(records: Iterable[TraceRecord]) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION)]
    for r in records:
        parts.append(_RECORD.pack(r.seq, r.time_ns, _DIRS.index(r.dir), r.vc, _KINDS.index(r.kind),
                                  _ROLES.index(r.role), r.id, r.line, int(r.payload), int(r.dirty),
                                  r.version))
    return b"".join(parts)


def decode_binary(data: bytes) -> List[TraceRecord]:
    if len(data) < _HEADER.size:
        raise MalformedRecord(0, "magic" if len(data) < 4 else "version", "truncated header")
    magic, version = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedRecord(0, "magic", f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise MalformedRecord(4, "version", f"unsupported version {version}")
    out = []
    pos = _HEADER.size
    while pos < len(data):
        if len(data) - pos < _RECORD.size:
            have = len(data) - pos
            name = next(n for n, off in reversed(_OFFSETS) if off <= have)
            raise MalformedRecord(pos, name, f"truncated record ({have} of {_RECORD.size} bytes)")
        seq, t, d, vc, kind, role, tid, line, payload, dirty, ver = _RECORD.unpack_from(data, pos)
        for name, val, limit in (("dir", d, len(_DIRS)), ("kind", kind, len(_KINDS)),
                                 ("role", role, len(_ROLES)), ("payload", payload, 2),
                                 ("dirty", dirty, 2)):
            if val >= limit:
                raise MalformedRecord(pos + dict(_OFFSETS)[name], name, f"code {val} out of range")
        out.append(TraceRecord(seq, t, _DIRS[d], vc, _KINDS[kind], _ROLES[role], tid, line,
                               bool(payload), bool(dirty), ver))
        pos += _RECORD.size
    return out


def encode(records, fmt: str = "jsonl") -> bytes:
    return encode_binary(records) if fmt == "binary" else encode_jsonl(records)


def decode(data: bytes, fmt: str = None) -> List[TraceRecord]:
    if fmt is None:
        fmt = "binary" if data[:4] == MAGIC else "jsonl"
    return decode_binary(data) if fmt == "binary" else decode_jsonl(data)


def write_trace(path, records, fmt=None):
    fmt = fmt or ("binary" if str(path).endswith((".ewf", ".bin")) else "jsonl")
    with open(path, "wb") as f:
        f.write(encode(records, fmt))


def read_trace(path):
    with open(path, "rb") as f:
        return decode(f.read())
