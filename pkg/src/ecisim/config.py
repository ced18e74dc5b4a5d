"""Scenario files: INI sections with documented defaults.

Every value is checked on load and errors name the section and key, for
example ``[transport] credits: expected an integer >= 1, got 'zero'``.
"""

import configparser
from dataclasses import dataclass
from typing import Dict, List, Optional

from . import subsetting as sb
from .home import HomeStrategy

DEFAULT_CONFIG = """\
[scenario]
# random | select | kv | regex | locality
kind = random
seed = 0

[home]
# full | stateless | two_state
subset = full
# HiddenO | WriteBackOnShare
strategy = HiddenO
caches = false

[remote]
# full | read_only | read_only_invalidate
subset = full
# lines the remote cache holds; 0 = unbounded
capacity = 3

[transport]
# class_separated | single_vc
vc_map = class_separated
credits = 4
# shuffle | fifo
reorder = shuffle
latency_ns = 160

[random]
steps = 10000
lines = 4
p_deliver = 0.5

[select]
rows = 51200
selectivity = 0.1
threads = 16

[kv]
buckets = 1024
chain = 8
threads = 48
lookups = 20000

[regex]
rows = 51200
pattern = qzx[0-9]+k
selectivity = 0.1
threads = 16

[locality]
results = 4096
reuse = 16
stride = 1
cache_bytes = 32768
ways = 8

[output]
# jsonl | binary
trace_format = jsonl
"""

# Every message class on one VC per direction with a single credit: a
# remote request and a home downgrade end up waiting on each other's reply
# credit. Used to show the deadlock detector at work.
PRESETS = {
    "adversarial-single-vc": """\
[scenario]
kind = random
seed = 1
[transport]
vc_map = single_vc
credits = 1
[random]
steps = 5000
lines = 4
""",
}

KINDS = ("random", "select", "kv", "regex", "locality")
HOME_SUBSETS = {"full": sb.full_home, "stateless": sb.stateless_home, "two_state": sb.two_state_home}
REMOTE_SUBSETS = {"full": sb.full_remote, "read_only": sb.read_only_remote,
                  "read_only_invalidate": sb.read_only_remote_with_invalidation}


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    raw: configparser.ConfigParser

    def get(self, section: str, key: str) -> str:
        return self.raw.get(section, key)

    def choice(self, section: str, key: str, options) -> str:
        v = self.get(section, key).strip()
        if v not in options:
            raise ConfigError(f"[{section}] {key}: expected one of {', '.join(options)}, got {v!r}")
        return v

    def integer(self, section: str, key: str, low: Optional[int] = None) -> int:
        v = self.get(section, key)
        try:
            n = int(v)
        except ValueError:
            n = None
        if n is None or (low is not None and n < low):
            bound = f" >= {low}" if low is not None else ""
            raise ConfigError(f"[{section}] {key}: expected an integer{bound}, got {v!r}")
        return n

    def number(self, section: str, key: str, low: float = None, high: float = None) -> float:
        v = self.get(section, key)
        try:
            x = float(v)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected a number, got {v!r}") from None
        if (low is not None and x < low) or (high is not None and x > high):
            raise ConfigError(f"[{section}] {key}: {x} outside [{low}, {high}]")
        return x

    def flag(self, section: str, key: str) -> bool:
        try:
            return self.raw.getboolean(section, key)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected true/false, got {self.get(section, key)!r}") from None

    @property
    def kind(self) -> str:
        return self.choice("scenario", "kind", KINDS)

    @property
    def seed(self) -> int:
        return self.integer("scenario", "seed", 0)

    def subsets(self):
        home = HOME_SUBSETS[self.choice("home", "subset", HOME_SUBSETS)]
        remote = REMOTE_SUBSETS[self.choice("remote", "subset", REMOTE_SUBSETS)]
        return (home(self.flag("home", "caches")) if home is sb.full_home else home()), remote()

    def strategy(self) -> HomeStrategy:
        return HomeStrategy(self.choice("home", "strategy", [s.value for s in HomeStrategy]))

    def section(self, name: str) -> Dict[str, str]:
        return dict(self.raw.items(name))

    def validate(self) -> List[sb.SubsetViolation]:
        """Type-check every known key, then the subset pair. Returns subset violations."""
        self.kind, self.seed, self.strategy(), self.flag("home", "caches")
        self.integer("remote", "capacity", 0)
        self.choice("transport", "vc_map", ("class_separated", "single_vc"))
        self.integer("transport", "credits", 1)
        self.choice("transport", "reorder", ("shuffle", "fifo"))
        self.number("transport", "latency_ns", 0)
        self.integer("random", "steps", 0)
        self.integer("random", "lines", 0)
        self.number("random", "p_deliver", 0, 1)
        self.integer("select", "rows", 1)
        self.number("select", "selectivity", 0, 1)
        self.integer("select", "threads", 1)
        self.integer("kv", "buckets", 1)
        self.integer("kv", "chain", 1)
        self.integer("kv", "threads", 1)
        self.integer("kv", "lookups", 1)
        self.integer("regex", "rows", 1)
        self.number("regex", "selectivity", 0, 1)
        self.integer("regex", "threads", 1)
        self.integer("locality", "results", 1)
        self.integer("locality", "reuse", 1)
        self.integer("locality", "stride", 1)
        self.integer("locality", "cache_bytes", 128)
        self.integer("locality", "ways", 1)
        self.choice("output", "trace_format", ("jsonl", "binary"))
        home, remote = self.subsets()
        return sb.validate(home, remote)


def parse_config(text: str = "", source: str = "<config>") -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(DEFAULT_CONFIG, "<defaults>")
    known = {s: set(cp[s]) for s in cp.sections()}
    try:
        user = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        user.read_string(text, source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    for sec in user.sections():
        if sec not in known:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, value in user[sec].items():
            if key not in known[sec]:
                raise ConfigError(f"{source}: [{sec}] unknown key {key!r}")
            cp[sec][key] = value
    return Scenario(cp)


def load_config(path: Optional[str], preset: Optional[str] = None) -> Scenario:
    if preset is not None:
        if path is not None:
            raise ConfigError("give either a config file or a preset, not both")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {', '.join(sorted(PRESETS))}")
        return parse_config(PRESETS[preset], f"<preset {preset}>")
    if path is None:
        return parse_config()
    try:
        with open(path) as f:
            return parse_config(f.read(), path)
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
