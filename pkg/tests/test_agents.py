import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecisim.errors import BusyLine, IllegalDowngrade, ProtocolViolation, UnknownTransaction
from ecisim.home import BackingStore, HomeAgent, HomeStrategy, RemoteView
from ecisim.protocol import CoherenceMessage, HomeState, RemoteState, RequestKind, Role
from ecisim.remote import PendingKind, RemoteAgent, SetAssociativeLru
from ecisim.system import System, healthy_run

K = RequestKind
R = RemoteState


def remote_with(line, state, data=1):
    r = RemoteAgent()
    ent = r._entry(line)
    ent.state, ent.data, ent.dirty = state, data, state is R.M
    r.eviction.touch(line)
    return r


def reply_to(msg, data=None):
    return msg.reply(data)


# -- remote: CPU side -----------------------------------------------------------

def test_read_hit_in_s():
    r = remote_with(3, R.S, data=9)
    acc = r.cpu_read(3)
    assert acc.hit and acc.value == 9 and not acc.messages


def test_read_miss_issues_read_shared():
    r = RemoteAgent()
    acc = r.cpu_read(3)
    assert not acc.hit
    (msg,) = acc.messages
    assert msg.kind is K.READ_SHARED and msg.role is Role.REQUEST and msg.kind.reply_required
    assert r.line(3).pending is PendingKind.AWAIT_SHARED_DATA


def test_read_miss_with_full_cache_evicts_first():
    r = RemoteAgent(capacity=1)
    r.handle(reply_to(r.cpu_read(0).messages[0], 5))
    msgs = r.cpu_read(1).messages
    assert [m.kind for m in msgs] == [K.REMOTE_DOWNGRADE_TO_INVALID, K.READ_SHARED]
    assert msgs[0].line == 0 and r.line(0).state is R.I


@given(st.lists(st.integers(0, 7), max_size=60), st.integers(1, 3))
def test_capacity_never_exceeded(lines, cap):
    """Small-capacity runs through a real system never hold more lines than allowed."""
    s = System(HomeAgent(), RemoteAgent(capacity=cap))
    for line in lines:
        try:
            s.remote_read(line)
        except BusyLine:
            pass
        s.drain()
        assert sum(1 for l in s.remote.lines.values() if l.data is not None) <= cap
    assert not s.ghost.violations


def test_busy_line():
    r = RemoteAgent()
    r.cpu_read(0)
    with pytest.raises(BusyLine):
        r.cpu_read(0)
    with pytest.raises(BusyLine):
        r.cpu_write(0, 1)


def test_write_in_e_is_silent():
    r = remote_with(2, R.E)
    acc = r.cpu_write(2, 7)
    assert acc.hit and not acc.messages
    assert r.line(2).state is R.M and r.line(2).dirty


def test_write_in_s_upgrades():
    r = remote_with(2, R.S)
    (msg,) = r.cpu_write(2, 7).messages
    assert msg.kind is K.UPGRADE_SHARED_TO_EXCLUSIVE
    r.handle(msg.reply())
    assert r.line(2).state is R.E


def test_write_in_m_is_in_place():
    r = remote_with(2, R.M, data=3)
    assert r.cpu_write(2, 4).hit and r.line(2).data == 4


def test_write_in_i_reads_exclusive():
    (msg,) = RemoteAgent().cpu_write(2, 7).messages
    assert msg.kind is K.READ_EXCLUSIVE


# -- remote: voluntary downgrades -----------------------------------------------

def test_m_to_i_carries_data():
    msg = remote_with(1, R.M, data=8).voluntary_downgrade(1, R.I)
    assert msg.kind is K.REMOTE_DOWNGRADE_TO_INVALID and msg.data == 8 and msg.dirty


def test_e_to_s_no_payload():
    r = remote_with(1, R.E)
    msg = r.voluntary_downgrade(1, R.S)
    assert msg.kind is K.REMOTE_DOWNGRADE_TO_SHARED and not msg.has_payload
    assert r.line(1).state is R.S


def test_downgrade_of_invalid_line_is_illegal():
    with pytest.raises(IllegalDowngrade):
        RemoteAgent().voluntary_downgrade(1, R.I)


def test_m_to_s_outside_minimal_protocol():
    with pytest.raises(IllegalDowngrade):
        remote_with(1, R.M).voluntary_downgrade(1, R.S)


# -- remote: home downgrades and responses ----------------------------------------

def home_req(kind, line=0, tid=1):
    return CoherenceMessage(tid, Role.REQUEST, kind, line)


def test_dg_i_on_m_returns_data():
    r = remote_with(0, R.M, data=6)
    (resp,) = r.handle(home_req(K.HOME_DOWNGRADE_TO_INVALID))
    assert resp.role is Role.RESPONSE and resp.data == 6 and resp.dirty
    assert r.line(0).state is R.I


def test_dg_i_on_invalid_line_still_answers():
    r = RemoteAgent()
    (resp,) = r.handle(home_req(K.HOME_DOWNGRADE_TO_INVALID))
    assert not resp.has_payload and r.line(0).state is R.I


def test_dg_s_on_e_clean_reply():
    r = remote_with(0, R.E)
    (resp,) = r.handle(home_req(K.HOME_DOWNGRADE_TO_SHARED))
    assert not resp.has_payload and r.line(0).state is R.S


def test_downgrade_held_while_request_pending():
    r = RemoteAgent()
    (rs,) = r.cpu_read(0).messages
    assert r.handle(home_req(K.HOME_DOWNGRADE_TO_INVALID)) == []
    assert PendingKind.AWAIT_HOME_DOWNGRADE_DONE in r.line(0).transients
    out = r.handle(rs.reply(4))
    assert [m.kind for m in out] == [K.HOME_DOWNGRADE_TO_INVALID]
    assert r.line(0).state is R.I


def test_shared_data_installs():
    r = RemoteAgent()
    (rs,) = r.cpu_read(0).messages
    r.handle(rs.reply(11))
    assert r.line(0).state is R.S and r.line(0).data == 11


def test_unknown_response():
    with pytest.raises(UnknownTransaction):
        RemoteAgent().handle(CoherenceMessage(40, Role.RESPONSE, K.READ_SHARED, 0, 1, True))


def test_set_associative_victims_stay_in_set():
    cache = SetAssociativeLru(sets=2, ways=1)
    r = RemoteAgent(eviction=cache)
    r.handle(r.cpu_read(0).messages[0].reply(1))
    r.handle(r.cpu_read(1).messages[0].reply(1))
    msgs = r.cpu_read(2).messages
    assert msgs[0].kind is K.REMOTE_DOWNGRADE_TO_INVALID and msgs[0].line == 0


# -- home --------------------------------------------------------------------------

def rreq(kind, line=0, tid=0, data=None):
    return CoherenceMessage(tid, Role.REQUEST, kind, line, data, data is not None)


@pytest.mark.parametrize("strategy", list(HomeStrategy))
def test_dirty_forward_on_read_shared(strategy):
    h = HomeAgent(strategy, store=BackingStore({0: 1}))
    h.local_access(0, write=True, value=5)
    (resp,) = h.handle(rreq(K.READ_SHARED))
    assert resp.data == 5 and resp.dirty
    e = h.entry(0)
    if strategy is HomeStrategy.HIDDEN_O:
        assert e.home is HomeState.O and h.store.writes == 0
    else:
        assert e.home is HomeState.I and h.store.read(0) == 5
    assert e.remote_view is RemoteView.SHARED


def test_read_exclusive_from_ii():
    h = HomeAgent(store=BackingStore({0: 3}))
    (resp,) = h.handle(rreq(K.READ_EXCLUSIVE))
    assert resp.data == 3
    assert h.entry(0).remote_view is RemoteView.EXCLUSIVE_OR_MODIFIED and h.joint_view(0) == "IE"


def test_voluntary_writeback_absorbed_silently():
    h = HomeAgent()
    h.handle(rreq(K.READ_EXCLUSIVE))
    assert h.handle(rreq(K.REMOTE_DOWNGRADE_TO_INVALID, data=9)) == []
    assert h.store.read(0) == 9 and h.entry(0).remote_view is RemoteView.INVALID


def test_out_of_subset_request():
    h = HomeAgent(receptions={K.READ_SHARED})
    with pytest.raises(ProtocolViolation):
        h.handle(rreq(K.READ_EXCLUSIVE))


def test_downgrade_then_busy():
    h = HomeAgent()
    h.handle(rreq(K.READ_EXCLUSIVE))
    res = h.local_access(0, write=True, value=4)
    (dg,) = res.messages
    assert dg.kind is K.HOME_DOWNGRADE_TO_INVALID
    with pytest.raises(BusyLine):
        h.initiate_downgrade(0, R.S)


def test_payload_reply_lands_in_mi():
    h = HomeAgent()
    h.handle(rreq(K.READ_EXCLUSIVE))
    dg = h.initiate_downgrade(0, R.I)
    h.handle(dg.reply(12))
    assert h.entry(0).home is HomeState.M and h.entry(0).remote_view is RemoteView.INVALID


def test_clean_reply_from_exclusive_view_lands_in_ii():
    h = HomeAgent()
    h.handle(rreq(K.READ_EXCLUSIVE))
    h.handle(h.initiate_downgrade(0, R.I).reply())
    assert h.joint_view(0) == "II"


def test_clean_reply_to_dg_s_gives_shared_view():
    for view_setup in (K.READ_EXCLUSIVE, K.READ_SHARED):
        h = HomeAgent()
        h.handle(rreq(view_setup))
        h.handle(h.initiate_downgrade(0, R.S).reply())
        assert h.entry(0).remote_view is RemoteView.SHARED


def test_unknown_downgrade_response():
    with pytest.raises(UnknownTransaction):
        HomeAgent().handle(CoherenceMessage(3, Role.RESPONSE, K.HOME_DOWNGRADE_TO_SHARED, 0))


def test_local_read_on_ii_no_messages():
    h = HomeAgent(store=BackingStore({0: 2}))
    res = h.local_access(0)
    assert res.done and res.value == 2 and not res.messages


def test_local_read_on_im_absorbs_dirty_data():
    s = System(HomeAgent(), RemoteAgent())
    s.remote_write(0)
    s.drain()
    s.remote_write(0)  # E -> M, silent
    res = s.home_read(0)
    assert not res.done and res.messages[0].kind is K.HOME_DOWNGRADE_TO_SHARED
    s.drain()
    again = s.home_read(0)
    assert again.done and again.value == s.ghost.latest[0]
    assert not s.ghost.violations


def test_local_write_on_is_reaches_mi():
    s = System(HomeAgent(), RemoteAgent())
    s.remote_read(0)
    s.drain()
    s.home_write(0)
    s.drain()
    s.home_write(0)
    assert s.home.joint_view(0) == "MI"
    assert not s.ghost.violations


def test_store_versions_never_decrease():
    with pytest.raises(ProtocolViolation):
        BackingStore({0: 5}).write(0, 4)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.sampled_from(list(HomeStrategy)), st.booleans())
def test_random_runs_keep_coherence(seed, strategy, caches):
    s = healthy_run(seed, steps=150, strategy=strategy, home_caches=caches)
    assert s.ghost.violations == []
    assert s.idle()
