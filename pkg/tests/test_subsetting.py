import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecisim import subsetting as sb
from ecisim.errors import DerivationUnsound, ProtocolViolation, WriteUnderReadOnlySubset
from ecisim.home import BackingStore
from ecisim.protocol import HOME_KINDS, REMOTE_KINDS, CoherenceMessage, RequestKind, Role
from ecisim.remote import RemoteAgent
from ecisim.system import RandomDriver, System
from ecisim.trace import TraceRecord
from ecisim.transport import Direction

K = RequestKind


def names(violations):
    return [(v.name, v.kind) for v in violations]


def test_full_pair_is_consistent():
    assert sb.validate(sb.full_home(), sb.full_remote()) == []
    assert sb.validate(sb.full_home(True), sb.full_remote()) == []


def test_read_only_with_stateless_home():
    assert sb.validate(sb.stateless_home(), sb.read_only_remote()) == []


def test_two_state_home_needs_invalidation_support():
    assert sb.validate(sb.two_state_home(), sb.read_only_remote_with_invalidation()) == []
    assert ("UnsupportedReception", K.HOME_DOWNGRADE_TO_INVALID) in names(
        sb.validate(sb.two_state_home(), sb.read_only_remote()))


def test_read_exclusive_against_stateless_home():
    remote = sb.ProtocolSubset(sb.Node.REMOTE, {K.READ_SHARED, K.REMOTE_DOWNGRADE_TO_INVALID, K.READ_EXCLUSIVE}, set())
    assert names(sb.validate(sb.stateless_home(), remote)) == [("UnsupportedReception", K.READ_EXCLUSIVE)]


def test_read_only_flag_with_write_path():
    remote = sb.ProtocolSubset(sb.Node.REMOTE, {K.READ_SHARED, K.UPGRADE_SHARED_TO_EXCLUSIVE}, set(), read_only=True)
    home = sb.ProtocolSubset(sb.Node.HOME, set(), {K.READ_SHARED, K.UPGRADE_SHARED_TO_EXCLUSIVE})
    assert ("ReadOnlyInconsistent", K.UPGRADE_SHARED_TO_EXCLUSIVE) in names(sb.validate(home, remote))


def test_missing_and_orphan_replies():
    home = sb.ProtocolSubset(sb.Node.HOME, set(), {K.READ_SHARED}, replies=set())
    remote = sb.ProtocolSubset(sb.Node.REMOTE, {K.READ_SHARED}, set())
    assert names(sb.validate(home, remote)) == [("MissingReply", K.READ_SHARED)]
    home = sb.ProtocolSubset(sb.Node.HOME, set(), {K.READ_SHARED, K.READ_EXCLUSIVE})
    assert ("OrphanReply", K.READ_EXCLUSIVE) in names(sb.validate(home, remote))


def test_closure_over_indistinguishable_states():
    from ecisim.protocol import JointState as J
    # the home cannot tell IE from IM, so it must accept the same kinds in both
    home = sb.ProtocolSubset(sb.Node.HOME, HOME_KINDS, REMOTE_KINDS,
                             receptions_by_state={J.IE: {K.REMOTE_DOWNGRADE_TO_INVALID}, J.IM: set()})
    assert ("ClosureViolation", K.REMOTE_DOWNGRADE_TO_INVALID) in names(sb.validate(home, sb.full_remote()))
    # states the remote can tell apart may differ freely
    remote = sb.ProtocolSubset(sb.Node.REMOTE, REMOTE_KINDS, HOME_KINDS,
                               initiations_by_state={J.IE: {K.REMOTE_DOWNGRADE_TO_SHARED}, J.IS: set()})
    assert sb.validate(sb.full_home(), remote) == []


subset_pairs = st.sampled_from([
    (sb.full_home(), sb.full_remote()),
    (sb.stateless_home(), sb.read_only_remote()),
    (sb.two_state_home(), sb.read_only_remote_with_invalidation()),
    (sb.two_state_home(), sb.read_only_remote()),
    (sb.stateless_home(), sb.full_remote()),
])


@given(subset_pairs, st.booleans(), st.data())
def test_removing_an_initiation_only_orphans(pair, drop_home, data):
    home, remote = pair
    side = home if drop_home else remote
    if not side.initiations:
        return
    kind = data.draw(st.sampled_from(sorted(side.initiations, key=lambda k: k.value)))
    before = set(sb.validate(home, remote))
    after = set(sb.validate(home.without(kind), remote) if drop_home else sb.validate(home, remote.without(kind)))
    for v in after - before:
        assert v.name == "OrphanReply" and v.kind is kind


def test_derive_stateless_home():
    sub, agent = sb.derive_stateless_home(sb.read_only_remote())
    assert sub == sb.stateless_home() and agent.directory_bytes() == 0
    with pytest.raises(DerivationUnsound):
        sb.derive_stateless_home(sb.full_remote())
    with pytest.raises(DerivationUnsound):
        sb.derive_stateless_home(sb.full_home())


def test_stateless_home_serves_and_ignores():
    home = sb.StatelessHome(BackingStore({7: 42}))
    (resp,) = home.handle(CoherenceMessage(0, Role.REQUEST, K.READ_SHARED, 7))
    assert resp.data == 42 and resp.role is Role.RESPONSE
    assert home.handle(CoherenceMessage(2, Role.REQUEST, K.REMOTE_DOWNGRADE_TO_INVALID, 7)) == []
    assert home.entries == {} and home.directory_bytes() == 0
    with pytest.raises(ProtocolViolation):
        home.handle(CoherenceMessage(4, Role.REQUEST, K.READ_EXCLUSIVE, 7))
    with pytest.raises(WriteUnderReadOnlySubset):
        home.local_access(7, write=True, value=1)


def test_directory_stays_empty_for_many_lines():
    s = System(sb.StatelessHome(), RemoteAgent(capacity=8, read_only=True))
    for line in range(500):
        s.remote_read(line)
        s.drain()
    assert s.home.directory_bytes() == 0 and s.home.entries == {}


def test_two_state_home_invalidates_before_writing():
    s = System(sb.TwoStateHome(), RemoteAgent(read_only=True))
    s.remote_read(3)
    s.drain()
    res = s.home_write(3)
    assert not res.done and res.messages[0].kind is K.HOME_DOWNGRADE_TO_INVALID
    s.drain()
    assert s.home_write(3).done
    s.remote_read(3)
    s.drain()
    assert s.remote.line(3).data == s.ghost.latest[3]
    assert not s.ghost.violations


def test_two_state_random_runs_are_coherent():
    for seed in range(10):
        s = System(sb.TwoStateHome(), RemoteAgent(capacity=2, read_only=True))
        RandomDriver(s, range(4), seed=seed, weights={"rr": 4, "re": 1, "hr": 2, "hw": 2}).run(300)
        s.drain()
        assert s.idle() and not s.ghost.violations


def rec(seq, version, direction=Direction.HOME_TO_REMOTE):
    return TraceRecord(seq, 0.0, direction, 1, K.READ_SHARED, Role.RESPONSE, 0, 0, True, True, version)


def test_conformance_diff_cases():
    assert sb.conformance_diff([], [])
    a = [rec(0, 1), rec(1, 2), rec(2, 3)]
    b = [rec(0, 1), rec(1, 5), rec(2, 3)]
    v = sb.conformance_diff(a, b)
    assert not v and v.index == 1 and str(v).startswith("NotEqual at 1")
    # messages towards the home are not remote-observable
    assert sb.conformance_diff(a + [rec(3, 9, Direction.REMOTE_TO_HOME)], a)
    short = sb.conformance_diff(a, a[:2])
    assert not short and short.index == 2


def test_small_read_only_comparison():
    verdict, full, lean = sb.read_only_comparison(requests=500, seed=3)
    assert verdict and lean.home.directory_bytes() == 0
    assert not full.ghost.violations and not lean.ghost.violations
