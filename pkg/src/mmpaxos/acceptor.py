"""Acceptor state machine, slot-wise for MultiPaxos.

A single promised round spans every slot. Votes are kept per slot. Chosen
hints mark slots whose value is known to be chosen and stored on a majority
of replicas; votes for those slots are dropped and later Phase1B replies
report the hint instead.
"""
from __future__ import annotations

from .core import (BOTTOM, ChosenHint, FastPhase2B, FastPropose, HintAck, Nack,
                   Phase1A, Phase1B, Phase2A, Phase2B, Round)
from .node import Node

LOG = "log"


class AcceptorState:
    """Promise, votes and chosen hints of one acceptor."""

    # Mutants flip this to accept Phase2A below the promise.
    enforce_promise = True

    def __init__(self):
        self.promised: Round = BOTTOM
        self.votes: dict = {}  # slot -> (vr, vv)
        self.hint_watermark = -1
        self.hinted: set = set()

    # classic acceptor rules, applied per slot
    def handle_phase1a(self, msg: Phase1A):
        # a repeat of the promised round is a retransmission: answer it again
        if msg.round < self.promised:
            return None
        self.promised = msg.round
        first = msg.first_slot
        votes = tuple(sorted((s, vr, vv) for s, (vr, vv) in self.votes.items() if s >= first))
        hinted = tuple(sorted(s for s in self.hinted if s >= first))
        return Phase1B(msg.round, votes, self.hint_watermark, hinted)

    def handle_phase2a(self, msg: Phase2A):
        if self.enforce_promise and msg.round < self.promised:
            return None
        if msg.round > self.promised:
            self.promised = msg.round
        if msg.slot <= self.hint_watermark or msg.slot in self.hinted:
            # already chosen; voting again is harmless but the vote is not kept
            return Phase2B(msg.round, msg.slot)
        self.votes[msg.slot] = (msg.round, msg.value)
        return Phase2B(msg.round, msg.slot)

    def record_chosen_hint(self, slot: int) -> None:
        if slot <= self.hint_watermark:
            return
        self.hinted.add(slot)
        self.votes.pop(slot, None)
        self._compact()

    def record_chosen_prefix(self, up_to: int) -> None:
        if up_to <= self.hint_watermark:
            return
        for s in [s for s in self.votes if s <= up_to]:
            del self.votes[s]
        self.hinted = {s for s in self.hinted if s > up_to}
        self.hint_watermark = up_to
        self._compact()

    def _compact(self) -> None:
        while self.hint_watermark + 1 in self.hinted:
            self.hint_watermark += 1
            self.hinted.discard(self.hint_watermark)

    def is_hinted(self, slot: int) -> bool:
        return slot <= self.hint_watermark or slot in self.hinted

    def state(self):
        return (self.promised, dict(self.votes), self.hint_watermark, frozenset(self.hinted))

    # journal replay
    def apply_record(self, record) -> None:
        kind = record[0]
        if kind == "promise":
            self.promised = max(self.promised, record[1])
        elif kind == "vote":
            _, slot, rnd, value = record
            self.promised = max(self.promised, rnd)
            if not self.is_hinted(slot):
                self.votes[slot] = (rnd, value)
        elif kind == "hint":
            self.record_chosen_prefix(record[1])
        elif kind == "hint_slot":
            self.record_chosen_hint(record[1])


class AcceptorNode(Node):
    role = "acceptor"
    state_class = AcceptorState

    def __init__(self, node_id, journal=None):
        super().__init__(node_id, journal)
        self.acc = self.state_class()

    def recover(self, records) -> None:
        for rec in records:
            self.acc.apply_record(rec)

    def on_phase1a(self, src, msg):
        reply = self.acc.handle_phase1a(msg)
        if reply is None:
            self.send(src, Nack(self.acc.promised))
            return
        self.journal.append(("promise", msg.round))
        self.send(src, reply)

    def on_phase2a(self, src, msg):
        before = self.acc.promised
        reply = self.acc.handle_phase2a(msg)
        if reply is None:
            self.send(src, Nack(self.acc.promised))
            return
        if not self.acc.is_hinted(msg.slot):
            self.journal.append(("vote", msg.slot, msg.round, msg.value))
            self.observe("vote", LOG, msg.slot, msg.round, msg.value)
        elif msg.round > before:
            self.journal.append(("promise", msg.round))
        self.send(src, reply)

    def on_chosen_hint(self, src, msg):
        self.acc.record_chosen_prefix(msg.up_to)
        self.journal.append(("hint", msg.up_to))
        self.send(src, HintAck(msg.round, msg.up_to))

    def state(self):
        return self.acc.state()


class FastAcceptorState(AcceptorState):
    """Single-decree Fast Paxos acceptor.

    After a Phase2A carrying ``any`` in its promised round it votes for the
    first client value it receives in that round.
    """

    def __init__(self):
        super().__init__()
        self.any_round: Round = BOTTOM

    def handle_phase2a(self, msg: Phase2A):
        if msg.round < self.promised:
            return None
        if msg.value.is_any:
            self.promised = msg.round
            self.any_round = msg.round
            return None
        return super().handle_phase2a(msg)

    def handle_fast_propose(self, value, slot: int = 0):
        r = self.any_round
        if r.is_bottom or r != self.promised:
            return None
        current = self.votes.get(slot)
        if current is not None and current[0] == r:
            return None
        self.votes[slot] = (r, value)
        return FastPhase2B(r, slot, value)

    def state(self):
        return super().state() + (self.any_round,)


class FastAcceptorNode(AcceptorNode):
    role = "fast-acceptor"
    state_class = FastAcceptorState

    def on_phase2a(self, src, msg):
        reply = self.acc.handle_phase2a(msg)
        if reply is None:
            if msg.value.is_any and self.acc.any_round == msg.round:
                self.journal.append(("any", msg.round))
            else:
                self.send(src, Nack(self.acc.promised))
            return
        self.journal.append(("vote", msg.slot, msg.round, msg.value))
        self.observe("vote", LOG, msg.slot, msg.round, msg.value)
        self.send(src, FastPhase2B(msg.round, msg.slot, msg.value))

    def on_fast_propose(self, src, msg: FastPropose):
        reply = self.acc.handle_fast_propose(msg.value)
        if reply is None:
            return
        self.journal.append(("vote", 0, reply.round, reply.value))
        self.observe("vote", LOG, 0, reply.round, reply.value)
        self.send(reply.round.owner, reply)


__all__ = ["AcceptorState", "AcceptorNode", "FastAcceptorState", "FastAcceptorNode",
           "ChosenHint", "LOG"]
