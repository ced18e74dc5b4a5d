import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecisim.home import HomeAgent
from ecisim.protocol import CoherenceMessage, RequestKind, Role
from ecisim.remote import RemoteAgent
from ecisim.system import RandomDriver, System
from ecisim.transport import (NUM_VCS, Direction, Link, MessageClass, NoCredit, VcMap,
                              message_class)

K = RequestKind


def remote_req(kind, line, tid=0):
    return CoherenceMessage(tid, Role.REQUEST, kind, line)


def home_req(kind, line, tid=1):
    return CoherenceMessage(tid, Role.REQUEST, kind, line)


def test_fourteen_vcs_eight_used():
    vm = VcMap.class_separated()
    assert len(vm.credits) == NUM_VCS == 14
    assert sorted(vm.assign.values()) == list(range(8))


@pytest.mark.parametrize("line", range(6))
def test_parity_selects_vc(line):
    vm = VcMap.class_separated()
    vc = vm.vc_for(remote_req(K.READ_SHARED, line))
    assert vc % 2 == line % 2


def test_classes():
    rs = remote_req(K.READ_SHARED, 0)
    assert message_class(rs) is MessageClass.REQUEST
    assert message_class(rs.reply(3)) is MessageClass.DATA_RESPONSE
    dg = home_req(K.HOME_DOWNGRADE_TO_SHARED, 0)
    assert message_class(dg) is MessageClass.HOME_INITIATED
    # a remote answer to a home downgrade rides with the remote's own requests
    assert message_class(dg.reply()) is MessageClass.REQUEST
    up = remote_req(K.UPGRADE_SHARED_TO_EXCLUSIVE, 0)
    assert message_class(up.reply()) is MessageClass.RESPONSE


def test_send_without_credit_fails():
    link = Link(VcMap.class_separated(credits=1))
    link.send(remote_req(K.READ_SHARED, 0))
    with pytest.raises(NoCredit):
        link.send(remote_req(K.READ_SHARED, 2, tid=2))
    # the other parity has its own VC
    link.send(remote_req(K.READ_SHARED, 1, tid=4))


def test_unknown_reorder_policy():
    with pytest.raises(ValueError):
        Link(reorder="lifo")


@given(st.lists(st.integers(0, 7), min_size=1, max_size=30), st.integers(0, 1000))
def test_per_vc_fifo_and_credit_conservation(lines, seed):
    link = Link(VcMap.class_separated(credits=64), seed=seed)
    sent = {}
    for i, line in enumerate(lines):
        env = link.send(remote_req(K.READ_SHARED, line, tid=2 * i))
        sent.setdefault(env.vc, []).append(env.msg.id)
    got = {}
    while (env := link.deliver_envelope()) is not None:
        got.setdefault(env.vc, []).append(env.msg.id)
    assert got == sent
    for d in Direction:
        for ch in link.channels[d]:
            assert ch.credits == ch.depth


def test_same_seed_same_delivery_order():
    def order(seed):
        link = Link(VcMap.class_separated(credits=64), seed=seed)
        for i in range(20):
            link.send(remote_req(K.READ_SHARED, i, tid=2 * i))
        out = []
        while (env := link.deliver_envelope()) is not None:
            out.append(env.msg.id)
        return out
    assert order(5) == order(5)
    assert sorted(order(5)) == sorted(order(6))


def test_fifo_policy_is_send_order():
    link = Link(reorder="fifo")
    for i in range(4):
        link.send(remote_req(K.READ_SHARED, i, tid=2 * i))
    assert [link.deliver_envelope().msg.id for _ in range(4)] == [0, 2, 4, 6]


def test_latency_advances_clock():
    link = Link(latency_ns=160)
    link.send(remote_req(K.READ_SHARED, 0))
    link.deliver_envelope()
    assert link.now == 160


def test_idle_link_has_no_deadlock():
    s = System(HomeAgent(), RemoteAgent())
    assert s.detect_deadlock() is None


def single_vc_cycle():
    """Request and home downgrade on one shared VC each way, one credit each."""
    s = System(HomeAgent(), RemoteAgent(), Link(VcMap.single_vc(1), reorder="fifo"))
    s.remote_write(2)
    s.drain()
    s.remote_read(0)
    s.home_write(2)
    return s


def test_single_vc_deadlocks():
    s = single_vc_cycle()
    assert s.consumable() == []
    rep = s.detect_deadlock()
    assert rep is not None and len(rep.cycle) == 2
    assert {d for d, _ in rep.cycle} == {"RemoteToHome", "HomeToRemote"}


def test_class_separation_breaks_the_cycle():
    s = System(HomeAgent(), RemoteAgent(), Link(VcMap.class_separated(1), reorder="fifo"))
    s.remote_write(2)
    s.drain()
    s.remote_read(0)
    s.home_write(2)
    s.drain()
    assert s.idle() and not s.ghost.violations


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_one_credit_random_runs_never_deadlock(seed):
    s = System(HomeAgent(), RemoteAgent(capacity=2), Link(VcMap.class_separated(1), seed=seed))
    drv = RandomDriver(s, range(4), seed=seed)
    for _ in range(400):
        drv.step()
        if s.link.in_flight() and not s.consumable():
            assert s.detect_deadlock() is None
    s.drain()
    assert s.idle() and not s.ghost.violations
