from hypothesis import given, strategies as st

from mmpaxos.core import BOTTOM, GarbageA, GarbageB, MatchA, MatchB, Nack, StopA, StopB
from mmpaxos.matchmaker import MatchmakerNode, MatchmakerState

from conftest import cfg, feed, rnd


def R(i):
    return rnd(i, "p")


def C(i):
    return cfg(f"C{i}", f"x{i}1", f"x{i}2", f"x{i}3")


def test_first_match_a_has_empty_history():
    m = MatchmakerState()
    assert m.handle_match_a(MatchA(0, R(0), C(0))) == MatchB(0, R(0), BOTTOM, ())


def test_history_returns_earlier_rounds():
    m = MatchmakerState()
    m.handle_match_a(MatchA(0, R(0), C(0)))
    reply = m.handle_match_a(MatchA(0, R(2), C(2)))
    assert reply.history == ((R(0), C(0)),)
    assert reply.gc_watermark == BOTTOM


def test_lower_round_ignored_and_nacked():
    node = MatchmakerNode("m1")
    for i in (0, 2, 3):
        feed(node, "p", MatchA(0, R(i), C(i)))
    out = feed(node, "p", MatchA(0, R(1), C(1)))
    assert out == [("p", Nack(R(3)))]
    assert R(1) not in node.epochs[0].log


def test_retransmitted_match_a_answered_again():
    m = MatchmakerState()
    m.handle_match_a(MatchA(0, R(0), C(0)))
    first = m.handle_match_a(MatchA(0, R(1), C(1)))
    assert m.handle_match_a(MatchA(0, R(1), C(1))) == first
    # same round with another configuration is not a retransmission
    assert m.handle_match_a(MatchA(0, R(1), C(2))) is None


def test_garbage_collection():
    m = MatchmakerState()
    m.handle_match_a(MatchA(0, R(0), C(0)))
    m.handle_match_a(MatchA(0, R(2), C(2)))
    assert m.handle_garbage_a(GarbageA(0, R(2))) == GarbageB(0, R(2))
    assert m.log == {R(2): C(2)} and m.gc_watermark == R(2)
    assert m.handle_garbage_a(GarbageA(0, R(1))) == GarbageB(0, R(1))
    assert m.log == {R(2): C(2)} and m.gc_watermark == R(2)


def test_garbage_idempotent():
    m = MatchmakerState()
    for i in range(4):
        m.handle_match_a(MatchA(0, R(i), C(i)))
    replies = [m.handle_garbage_a(GarbageA(0, R(3))) for _ in range(2)]
    once = MatchmakerState()
    for i in range(4):
        once.handle_match_a(MatchA(0, R(i), C(i)))
    once.handle_garbage_a(GarbageA(0, R(3)))
    assert replies == [GarbageB(0, R(3))] * 2
    assert m.state() == once.state()


def test_stop_freezes():
    node = MatchmakerNode("m1")
    feed(node, "p", MatchA(0, R(0), C(0)))
    out = feed(node, "d", StopA(0))
    assert out == [("d", StopB(0, ((R(0), C(0)),), BOTTOM))]
    assert feed(node, "p", MatchA(0, R(5), C(5))) == []
    assert feed(node, "p", GarbageA(0, R(5))) == []
    assert feed(node, "d", StopA(0)) == out


def test_fresh_stop_is_empty():
    node = MatchmakerNode("m1")
    assert feed(node, "d", StopA(0)) == [("d", StopB(0, (), BOTTOM))]


def test_stop_twice_same_state_hash():
    node = MatchmakerNode("m1")
    feed(node, "p", MatchA(0, R(0), C(0)))
    feed(node, "d", StopA(0))
    h = node.state_hash()
    feed(node, "d", StopA(0))
    assert node.state_hash() == h


def test_bootstrap_then_match():
    m = MatchmakerState()
    m.bootstrap({R(2): C(2), R(4): C(4)}, R(2))
    assert m.handle_match_a(MatchA(0, R(5), C(5))) == \
        MatchB(0, R(5), R(2), ((R(2), C(2)), (R(4), C(4))))


def test_empty_bootstrap_like_fresh():
    a, b = MatchmakerState(), MatchmakerState()
    b.bootstrap({}, BOTTOM)
    for i in (1, 3, 2):
        assert a.handle_match_a(MatchA(0, R(i), C(i))) == b.handle_match_a(MatchA(0, R(i), C(i)))


def test_bootstrap_below_watermark_ignored():
    m = MatchmakerState()
    m.bootstrap({R(2): C(2), R(4): C(4)}, R(2))
    assert m.handle_match_a(MatchA(0, R(1), C(1))) is None


def test_restart_keeps_promises():
    node = MatchmakerNode("m1")
    feed(node, "p", MatchA(0, R(3), C(3)))
    feed(node, "p", GarbageA(0, R(3)))
    again = MatchmakerNode("m1", epochs=(0,))
    again.recover(list(node.journal))
    assert again.state() == node.state()


ops = st.lists(st.tuples(st.sampled_from(["match", "gc"]), st.integers(0, 8)), max_size=30)


@given(ops)
def test_monotone_and_complete_history(seq):
    m = MatchmakerState()
    emitted = []
    for kind, i in seq:
        if kind == "match":
            before = dict(m.log)
            w = m.gc_watermark
            reply = m.handle_match_a(MatchA(0, R(i), C(i % 3)))
            if reply is not None:
                expected = tuple(sorted((j, c) for j, c in before.items() if w <= j < R(i)))
                assert reply.history == expected
                emitted.append(R(i))
        else:
            m.handle_garbage_a(GarbageA(0, R(i)))
            assert all(j >= m.gc_watermark for j in m.log)
    # strictly increasing, apart from retransmissions of the newest round
    distinct = [r for k, r in enumerate(emitted) if k == 0 or r != emitted[k - 1]]
    assert distinct == sorted(set(distinct))
