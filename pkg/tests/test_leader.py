from mmpaxos.core import (NOOP, BOTTOM, Chosen, ChosenHint, ClientRequest, GarbageA, HintAck,
                          MatchA, MatchB, Phase1A, Phase1B, Phase2A, Phase2B, PrefixPersisted,
                          Reconfigure, Redirect, Round, WatermarkReply, command)
from mmpaxos.discovery import ClusterView
from mmpaxos.leader import LEADER, LeaderNode, LeaderOptions
from mmpaxos.core import majority_configuration

MM = ("m1", "m2", "m3")
OLD = ("a1", "a2", "a3")
NEW = ("a4", "a5", "a6")


def view():
    return ClusterView(matchmakers=MM, acceptors=OLD + NEW, replicas=("r1", "r2", "r3"),
                       leaders=("l1",))


def make(**opts):
    opts.setdefault("auto_elect", False)
    return LeaderNode("l1", view(), OLD, options=LeaderOptions(**opts))


def deliver(node, src, msg):
    node.handle(src, msg)
    return node.drain()[0]


def of(out, cls):
    return [(d, m) for d, m in out if isinstance(m, cls)]


def elect(node, history=(), watermark=-1):
    node.start_election()
    out = node.drain()[0]
    r = node.setup.round
    for m in MM[:2]:
        out += deliver(node, m, MatchB(0, r, BOTTOM, tuple(history)))
    for rep in ("r1", "r2"):
        out += deliver(node, rep, WatermarkReply(r, watermark))
    return out


def choose(node, out):
    """Answer every Phase2A in ``out`` from the first two recipients."""
    more = []
    for d, m in of(out, Phase2A):
        if d in sorted(node.config.acceptors)[:2]:
            more += deliver(node, d, Phase2B(m.round, m.slot))
    return more


def test_empty_history_is_steady_immediately():
    node = make()
    out = elect(node)
    assert node.status == LEADER and node.established
    assert of(out, Phase1A) == [] and of(out, Phase2A) == []


def test_phase1_repairs_maybe_chosen_region():
    node = make()
    prev = Round(0, "l0", 0)
    old = majority_configuration("old", OLD)
    d, e = command(b"d", "c", 1), command(b"e", "c", 2)
    out = elect(node, [(prev, old)], watermark=2)
    p1a = of(out, Phase1A)
    assert sorted(dst for dst, _ in p1a) == list(OLD)
    assert p1a[0][1].first_slot == 3
    r = node.setup.round
    out = deliver(node, "a1", Phase1B(r, ((3, prev, d),)))
    out += deliver(node, "a2", Phase1B(r, ((5, prev, e),)))
    proposals = {m.slot: m.value for _, m in of(out, Phase2A)}
    assert proposals == {3: d, 4: NOOP, 5: e}
    assert node.next_slot == 6


def test_chosen_hint_slot_is_not_reproposed():
    node = make()
    prev = Round(0, "l0", 0)
    out = elect(node, [(prev, majority_configuration("old", OLD))])
    r = node.setup.round
    out = deliver(node, "a1", Phase1B(r, ((0, prev, command(b"a")),), -1, (1,)))
    out += deliver(node, "a2", Phase1B(r, ()))
    assert {m.slot for _, m in of(out, Phase2A)} == {0}
    assert 1 in node.chosen and node.chosen[1] is None


def test_slots_assigned_in_arrival_order():
    node = make()
    elect(node)
    out = []
    for seq in range(8):
        out += deliver(node, "c1", ClientRequest("c1", seq, b"x"))
    slots = [m.slot for d, m in of(out, Phase2A) if d == "a1"]
    assert slots == list(range(8))
    assert of(out, Redirect) == [("c1", Redirect("l1"))]


def _steady(**opts):
    node = make(**opts)
    elect(node)
    choose(node, deliver(node, "c1", ClientRequest("c1", 1, b"x")))
    return node


def test_reconfigure_does_not_queue_with_all_optimizations():
    node = _steady()
    r0 = node.round
    out = deliver(node, "bench", Reconfigure(NEW))
    assert of(out, MatchA)
    # matchmaking in flight: commands still go to the old configuration
    out = deliver(node, "c1", ClientRequest("c1", 2, b"y"))
    assert {(d, m.round) for d, m in of(out, Phase2A)} == {(a, r0) for a in OLD}
    r1 = node.setup.round
    assert r1 == Round(r0.counter, "l1", r0.sub + 1)
    for m in MM[:2]:
        out = deliver(node, m, MatchB(0, r1, BOTTOM, ((r0, node.config),)))
    # bypass: no Phase 1, the pending slot is re-sent in the new round
    assert of(out, Phase1A) == []
    assert node.round == r1 and node.config.acceptors == frozenset(NEW)
    assert {d for d, _ in of(out, Phase2A)} == set(NEW)
    assert node.queued_total == 0


def test_reconfigure_without_bypass_queues_during_phase1():
    node = _steady(bypass=False)
    r0, c0 = node.round, node.config
    deliver(node, "bench", Reconfigure(NEW))
    r1 = node.setup.round
    for m in MM[:2]:
        out = deliver(node, m, MatchB(0, r1, BOTTOM, ((r0, c0),)))
    assert sorted(d for d, _ in of(out, Phase1A)) == list(OLD)
    assert of(deliver(node, "c1", ClientRequest("c1", 2, b"y")), Phase2A) == []
    assert node.queued_total == 1
    deliver(node, "a1", Phase1B(r1, ()))
    out = deliver(node, "a2", Phase1B(r1, ()))
    assert [m.round for _, m in of(out, Phase2A)] == [r1] * 3
    assert node.queue == []


def test_reconfigure_to_same_configuration():
    node = _steady()
    r0 = node.round
    deliver(node, "bench", Reconfigure(OLD))
    r1 = node.setup.round
    for m in MM[:2]:
        deliver(node, m, MatchB(0, r1, BOTTOM, ((r0, node.config),)))
    assert node.round == r1 and node.config.acceptors == frozenset(OLD)


def test_first_round_gc_is_immediate():
    node = make()
    out = elect(node)
    assert of(out, GarbageA) == [(m, GarbageA(0, node.round)) for m in MM]


def test_gc_waits_for_replica_acks():
    node = _steady()
    r0 = node.round
    deliver(node, "bench", Reconfigure(NEW))
    r1 = node.setup.round
    for m in MM[:2]:
        deliver(node, m, MatchB(0, r1, BOTTOM, ((r0, node.config.relabel("x")),)))
    out = choose(node, [(a, Phase2A(r1, 0, command(b"x", "c1", 1))) for a in NEW])
    assert node.chosen_watermark == 0
    assert of(out, ChosenHint) == [] and of(out, GarbageA) == []
    out = deliver(node, "r1", PrefixPersisted(0))
    assert of(out, ChosenHint) == []
    out = deliver(node, "r2", PrefixPersisted(0))
    assert {d for d, _ in of(out, ChosenHint)} == set(NEW)
    deliver(node, "a4", HintAck(r1, 0))
    out = deliver(node, "a5", HintAck(r1, 0))
    assert of(out, GarbageA) == [(m, GarbageA(0, r1)) for m in MM]


def test_chosen_watermark_contiguity():
    node = make()
    elect(node)
    out = []
    for seq in range(4):
        out += deliver(node, "c1", ClientRequest("c1", seq, b"x"))
    by_slot = {m.slot: m for d, m in of(out, Phase2A) if d == "a1"}

    def ack(slot):
        m = by_slot[slot]
        return deliver(node, "a1", Phase2B(m.round, slot)) + \
            deliver(node, "a2", Phase2B(m.round, slot))

    ack(0), ack(1), ack(3)
    assert node.chosen_watermark == 1
    ack(2)
    assert node.chosen_watermark == 3
    again = ack(3)
    assert of(again, Chosen) == [] and node.chosen_watermark == 3


def test_follower_redirects():
    node = make()
    node.election.leader = "l2"
    assert deliver(node, "c1", ClientRequest("c1", 1, b"x")) == [("c1", Redirect("l2"))]
