import pytest

from ecisim.home import HomeAgent, HomeStrategy
from ecisim.modelcheck import StateSpaceExceeded, canonical_key, model_check
from ecisim.protocol import RequestKind
from ecisim.remote import RemoteAgent
from ecisim.subsetting import StatelessHome, TwoStateHome
from ecisim.system import System

K = RequestKind


@pytest.mark.parametrize("strategy", list(HomeStrategy))
def test_one_line_full_protocol_is_safe(strategy):
    res = model_check(1, depth=20, home_factory=lambda: HomeAgent(strategy))
    assert res.ok and res.complete, res.violation
    assert res.states > 100


def test_home_caching_is_safe():
    res = model_check(1, depth=20, home_factory=lambda: HomeAgent(home_caches=True))
    assert res.ok, res.violation


def test_read_only_subsets_are_safe():
    ro = lambda: RemoteAgent(read_only=True)
    res = model_check(2, depth=12, home_factory=StatelessHome, remote_factory=ro, ops=("rr", "re", "hr"))
    assert res.ok and res.complete
    res = model_check(1, depth=20, home_factory=TwoStateHome, remote_factory=ro, ops=("rr", "re", "hr", "hw"))
    assert res.ok and res.complete


MUTANTS = {
    "remote drops DG-S reply": dict(remote_factory=lambda: RemoteAgent(drop_replies=[K.HOME_DOWNGRADE_TO_SHARED])),
    "remote drops DG-I reply": dict(remote_factory=lambda: RemoteAgent(drop_replies=[K.HOME_DOWNGRADE_TO_INVALID])),
    "home skips dirty-forward reply": dict(home_factory=lambda: HomeAgent(drop_forward_reply=True)),
    "home drops RS reply": dict(home_factory=lambda: HomeAgent(drop_replies=[K.READ_SHARED])),
    "home drops RE reply": dict(home_factory=lambda: HomeAgent(drop_replies=[K.READ_EXCLUSIVE])),
    "home drops upgrade reply": dict(home_factory=lambda: HomeAgent(drop_replies=[K.UPGRADE_SHARED_TO_EXCLUSIVE])),
}


@pytest.mark.parametrize("name", MUTANTS)
def test_dropping_any_reply_is_found(name):
    res = model_check(1, depth=20, **MUTANTS[name])
    assert not res.ok
    assert res.counterexample and res.violation


def test_counterexample_replays():
    from ecisim.modelcheck import apply
    res = model_check(1, depth=20, **MUTANTS["home drops RS reply"])
    s = System(HomeAgent(drop_replies=[K.READ_SHARED]), RemoteAgent(), record=False)
    for act in res.counterexample:
        assert apply(s, act)
    assert s.idle() and s.remote.line(0).pending is not None


def test_state_limit():
    with pytest.raises(StateSpaceExceeded) as e:
        model_check(2, depth=30, max_states=500)
    assert e.value.visited > 500 and "500" in str(e.value)


def test_zero_lines_is_trivially_safe():
    res = model_check(0, depth=5)
    assert res.ok and res.states == 1


def test_keys_ignore_id_and_version_offsets():
    a = System(HomeAgent(), RemoteAgent(), record=False)
    b = System(HomeAgent(), RemoteAgent(), record=False)
    b.remote.next_id += 40
    b.ghost.next_version += 7
    for s in (a, b):
        s.remote_write(0)
        s.drain()
    assert canonical_key(a) == canonical_key(b)
