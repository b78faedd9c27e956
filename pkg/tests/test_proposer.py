import pytest

from mmpaxos.core import (ANY, BOTTOM, GarbageA, MatchA, MatchB, Phase1A, Phase1B, Phase2A,
                          Phase2B, Round, command)
from mmpaxos.proposer import (CHOSEN, PHASE1, PHASE2, GCGuardError, Proposer, ProposerError,
                              ProposerOptions, compute_history, select_value)

from conftest import cfg

MM = ("m1", "m2", "m3")
u, v, w = command(b"u"), command(b"v"), command(b"w")
C0 = cfg("C0", "a1", "a2", "a3")
C1 = cfg("C1", "b1", "b2", "b3")
C2 = cfg("C2", "c1", "c2", "c3")


def R(i, owner="a"):
    return Round(i, owner, 0)


def make(**opts):
    sent = []
    p = Proposer("a", lambda kind, dst, msg: sent.append((dst, msg)), lambda: (0, MM),
                 options=ProposerOptions(**opts))
    return p, sent


def to_phase1(p, sent, history=(), w=BOTTOM):
    r = p.round
    for m in MM[:2]:
        p.on_match_b(m, MatchB(0, r, w, tuple(history)))
    return [(d, m) for d, m in sent if isinstance(m, Phase1A)]


def test_begin_round_uses_successor():
    p, sent = make()
    p.round = Round(0, "a", 0)
    r = p.begin_round(v, C0)
    assert r == Round(0, "a", 1)
    assert sent == [(m, MatchA(0, Round(0, "a", 1), C0)) for m in MM]


def test_proactive_round_without_value():
    p, sent = make()
    p.round = Round(0, "a", 0)
    p.begin_round(None, C0)
    assert sent == [(m, MatchA(0, Round(0, "a", 1), C0)) for m in MM]
    assert p.value is None


def test_begin_round_guarded_by_phase():
    p, _ = make()
    p.begin_round(v, C0)
    p.phase = PHASE2
    with pytest.raises(ProposerError):
        p.begin_round(v, C0)


def test_compute_history_union():
    r = R(2)
    h, wm = compute_history([MatchB(0, r, BOTTOM, ((R(0), C0),)),
                             MatchB(0, r, BOTTOM, ((R(1), C1),))])
    assert h == {R(0): C0, R(1): C1} and wm == BOTTOM


def test_compute_history_prunes_below_watermark():
    r = R(2)
    both = ((R(0), C0), (R(1), C1))
    h, wm = compute_history([MatchB(0, r, R(0), both), MatchB(0, r, R(1), both)])
    assert h == {R(1): C1} and wm == R(1)


def test_empty_history_skips_phase1():
    p, sent = make()
    p.begin_round(v, C0)
    assert to_phase1(p, sent) == []
    assert p.phase == PHASE2 and p.k == BOTTOM
    assert sent[-1] == ("a3", Phase2A(p.round, 0, v))


def test_history_needs_matchmaker_quorum():
    p, sent = make()
    p.begin_round(v, C1)
    p.on_match_b("m1", MatchB(0, p.round, BOTTOM, ((R(0, "b"), C0),)))
    assert p.phase != PHASE1
    p.on_match_b("m1", MatchB(0, p.round, BOTTOM, ((R(0, "b"), C0),)))
    assert p.phase != PHASE1
    p.on_match_b("x9", MatchB(0, p.round, BOTTOM, ()))
    assert p.phase != PHASE1


def test_select_value():
    replies = [Phase1B(R(2), ((0, R(1), v),)), Phase1B(R(2), ((0, R(0), u),))]
    assert select_value(replies) == (R(1), {v})
    assert select_value([Phase1B(R(2), ())]) == (BOTTOM, set())


def test_phase1_proposes_highest_vote():
    p, sent = make()
    p.highest_seen = R(1, "b")
    p.begin_round(w, C1)
    p1a = to_phase1(p, sent, [(R(0, "b"), C0)])
    assert sorted(d for d, _ in p1a) == ["a1", "a2", "a3"]
    p.on_phase1b("a1", Phase1B(p.round, ((0, R(0, "b"), v),)))
    p.on_phase1b("a2", Phase1B(p.round, ()))
    assert sent[-1][1] == Phase2A(p.round, 0, v)


@pytest.mark.parametrize("pruning", [True, False])
def test_round_pruning(pruning):
    # C0 registered in round 0, C1 in round 1; only C1 answers, reporting a
    # round-1 vote, which proves nothing was chosen in round 0
    p, sent = make(round_pruning=pruning)
    p.highest_seen = R(1, "b")
    p.begin_round(w, C2)
    to_phase1(p, sent, [(R(0, "b"), C0), (R(1, "b"), C1)])
    p.on_phase1b("b1", Phase1B(p.round, ((0, R(1, "b"), v),)))
    p.on_phase1b("b2", Phase1B(p.round, ((0, R(1, "b"), v),)))
    if pruning:
        assert p.phase == PHASE2 and sent[-1][1] == Phase2A(p.round, 0, v)
    else:
        assert p.phase == PHASE1


def test_phase2_quorum_and_duplicates():
    p, sent = make()
    p.begin_round(v, C0)
    to_phase1(p, sent)
    p.on_phase2b("a1", Phase2B(p.round, 0))
    p.on_phase2b("a1", Phase2B(p.round, 0))
    assert p.phase == PHASE2
    p.on_phase2b("a2", Phase2B(p.round, 0))
    assert p.phase == CHOSEN and p.chosen == v


def test_gc_after_chosen():
    p, sent = make()
    p.round = R(1)
    p.begin_round(v, C0)
    to_phase1(p, sent)
    for a in ("a1", "a2"):
        p.on_phase2b(a, Phase2B(p.round, 0))
    assert p.maybe_issue_gc() == 1
    assert sent[-1] == ("m3", GarbageA(0, p.round))


def test_gc_after_empty_phase1():
    p, sent = make()
    p.highest_seen = R(2, "b")
    p.begin_round(None, C1)
    to_phase1(p, sent, [(R(0, "b"), C0)])
    for a in ("a1", "a2"):
        p.on_phase1b(a, Phase1B(p.round, ()))
    assert p.round == R(3) and p.maybe_issue_gc() == 2
    assert sent[-1] == ("m3", GarbageA(0, R(3)))


def test_gc_guard_rejects_premature_call():
    p, sent = make()
    p.highest_seen = R(1, "b")
    p.begin_round(None, C1)
    to_phase1(p, sent, [(R(0, "b"), C0)])
    p.on_phase1b("a1", Phase1B(p.round, ((0, R(0, "b"), v),)))
    with pytest.raises(GCGuardError):
        p.maybe_issue_gc()


def _fast(votes):
    p, sent = make(fast=True)
    p.highest_seen = R(1, "b")
    p.begin_round(None, C1)
    to_phase1(p, sent, [(R(0, "b"), C0)])
    for a, vote in zip(("a1", "a2"), votes):
        p.on_phase1b(a, Phase1B(p.round, ((0, R(0, "b"), vote),) if vote else ()))
    return sent[-1][1]


def test_fast_mode_value_selection():
    assert _fast([None, None]).value == ANY
    assert _fast([v, None]).value == v
    assert _fast([v, w]).value == ANY
