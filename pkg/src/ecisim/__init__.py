"""Two-node cache coherence protocol simulator, subset checker and trace monitor."""

from .errors import (BusyLine, DerivationUnsound, EciError, IllegalDowngrade, ProtocolViolation,
                     UnknownTransaction, WriteUnderReadOnlySubset)
from .home import BackingStore, HomeAgent, HomeStrategy
from .modelcheck import StateSpaceExceeded, model_check
from .nfa import ParseError, UnknownField, check, check_all, compile_spec
from .protocol import (CoherenceMessage, HomeState, JointState, RemoteState, RequestKind, Role,
                       TransitionClass, classify_transition, compare_distance, message_rules)
from .remote import RemoteAgent
from .specs import builtin_automata, inject
from .subsetting import (ProtocolSubset, StatelessHome, TwoStateHome, conformance_diff, derive_stateless_home,
                         validate)
from .system import RandomDriver, System, healthy_run
from .trace import MalformedRecord, TraceRecord, read_trace, write_trace
from .transport import Link, VcMap

__all__ = [
    "BackingStore", "BusyLine", "CoherenceMessage", "DerivationUnsound", "EciError", "HomeAgent",
    "HomeState", "HomeStrategy", "IllegalDowngrade", "JointState", "Link", "MalformedRecord", "ParseError",
    "ProtocolSubset", "ProtocolViolation", "RandomDriver", "RemoteAgent", "RemoteState", "RequestKind",
    "Role", "StateSpaceExceeded", "StatelessHome", "System", "TraceRecord", "TransitionClass",
    "TwoStateHome", "UnknownField", "UnknownTransaction", "VcMap", "WriteUnderReadOnlySubset",
    "builtin_automata", "check", "check_all", "classify_transition", "compare_distance", "compile_spec",
    "conformance_diff", "derive_stateless_home", "healthy_run", "inject", "message_rules", "model_check",
    "read_trace", "validate", "write_trace",
]
