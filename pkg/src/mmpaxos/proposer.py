"""Single-decree proposer with a matchmaking phase, plus the Fast Paxos variant.

``Proposer`` is a plain component that emits messages through a callback so
it can be hosted by ``ProposerNode`` or embedded in another node (the
matchmaker reconfiguration driver runs one with a fixed configuration).
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass

from .core import (ANY, BOTTOM, Configuration, FastPhase2B, GarbageA, MatchA, Nack,
                   Phase1A, Phase2A, Round, Value, round_successor)
from .node import Node

logger = logging.getLogger(__name__)

IDLE, MATCHMAKING, PHASE1, PHASE2, CHOSEN = "idle", "matchmaking", "phase1", "phase2", "chosen"


class ProposerError(RuntimeError):
    """Raised when an operation is called in the wrong phase."""


class GCGuardError(ProposerError):
    """Raised when GarbageA is requested without a GC scenario holding."""


@dataclass(frozen=True)
class ProposerOptions:
    round_pruning: bool = False
    gc: bool = True
    fast: bool = False
    guard_gc: bool = True
    # configurations guessed for concurrent matchmaking and Phase 1
    concurrent_guess: tuple = ()


def compute_history(replies, quorum: int | None = None):
    """Union of MatchB histories, pruned below the largest reply watermark.

    ``replies`` is an iterable of MatchB messages for one round. Returns
    ``(history_dict, watermark)``.
    """
    replies = list(replies)
    if not replies:
        raise ValueError("no MatchB replies")
    rounds = {m.round for m in replies}
    if len(rounds) != 1:
        raise ValueError(f"MatchB replies for different rounds: {sorted(rounds)}")
    if quorum is not None and len(replies) < quorum:
        raise ValueError("not enough MatchB replies")
    w = max(m.gc_watermark for m in replies)
    history = {}
    for m in replies:
        for j, c in m.history:
            if j >= w:
                history[j] = c
    return history, w


def select_value(phase1bs, slot: int = 0):
    """Return (k, {values voted in round k}) over the given Phase1B replies."""
    k = BOTTOM
    values = set()
    for reply in phase1bs:
        for s, vr, vv in reply.votes:
            if s != slot:
                continue
            if vr > k:
                k, values = vr, {vv}
            elif vr == k and not vr.is_bottom:
                values.add(vv)
    return k, values


class Proposer:
    """State machine for one proposer of one single-decree instance."""

    def __init__(self, proposer_id: str, emit, matchmakers=None, *, options=None,
                 fixed_config: Configuration | None = None, instance="log"):
        self.id = proposer_id
        self.emit = emit  # emit(kind, dst, msg); kind is "mm" or "acc"
        self.matchmakers = matchmakers  # callable -> (epoch, members)
        self.options = options or ProposerOptions()
        self.fixed_config = fixed_config
        self.instance = instance
        self.observe = lambda *a: None

        self.phase = IDLE
        self.round: Round = BOTTOM
        self.highest_seen: Round = BOTTOM
        self.value: Value | None = None
        self.config: Configuration | None = None
        self.epoch = 0
        self.mm_members: tuple = ()
        self.mm_replies: dict = {}
        self.history: dict = {}
        self.phase1: dict = {}
        self.phase1_done = False
        self.k: Round = BOTTOM
        self.proposed: Value | None = None
        self.phase2: set = set()
        self.fast_votes: dict = {}
        self.chosen: Value | None = None
        self.chosen_round: Round = BOTTOM
        self.hint_acked = False
        self.gc_round: Round = BOTTOM
        self.gc_acks: set = set()
        self.gc_done = False

    # -- rounds -----------------------------------------------------------
    def next_round(self) -> Round:
        top = max(self.round, self.highest_seen)
        if self.round.is_bottom and top.is_bottom:
            return Round(0, self.id, 0)
        if top.owner == self.id:
            return round_successor(top)
        return Round(top.counter + 1, self.id, 0)

    def observe_round(self, r: Round) -> None:
        if r > self.highest_seen:
            self.highest_seen = r

    # -- Matchmaking ------------------------------------------------------
    def begin_round(self, value: Value | None, config: Configuration) -> Round:
        if self.phase not in (IDLE,):
            raise ProposerError(f"begin_round in phase {self.phase}")
        self._reset_round()
        self.round = self.next_round()
        self.value = value
        if self.fixed_config is not None:
            config = self.fixed_config
        self.config = config
        self.observe("round_config", self.instance, self.round, config)
        if self.fixed_config is not None:
            self.history = {BOTTOM: config}
            self._start_phase1()
            return self.round
        self.phase = MATCHMAKING
        self.epoch, self.mm_members = self.matchmakers()
        msg = MatchA(self.epoch, self.round, config)
        for m in self.mm_members:
            self.emit("mm", m, msg)
        for c in self.options.concurrent_guess:
            p1a = Phase1A(self.round, 0)
            for a in sorted(c.acceptors):
                self.emit("acc", a, p1a)
        return self.round

    def _reset_round(self) -> None:
        self.mm_replies = {}
        self.history = {}
        self.phase1 = {}
        self.phase1_done = False
        self.k = BOTTOM
        self.proposed = None
        self.phase2 = set()
        self.fast_votes = {}
        self.hint_acked = False
        self.gc_acks = set()
        self.gc_done = False

    def abandon(self) -> None:
        if self.phase != CHOSEN:
            self.phase = IDLE

    @property
    def mm_quorum(self) -> int:
        return len(self.mm_members) // 2 + 1

    def on_match_b(self, src, msg) -> None:
        if self.phase != MATCHMAKING or msg.round != self.round or msg.epoch != self.epoch:
            return
        if src not in self.mm_members:
            return
        self.mm_replies[src] = msg
        if len(self.mm_replies) < self.mm_quorum:
            return
        self.history, w = compute_history(self.mm_replies.values())
        self.observe("history", self.instance, self.round, tuple(sorted(self.history.items())),
                     w)
        guessed = {c.acceptors for c in self.options.concurrent_guess}
        self._start_phase1(skip=guessed)

    def _start_phase1(self, skip=()) -> None:
        self.phase = PHASE1
        if not self.history:
            self._finish_phase1()
            return
        sent = set()
        for c in self.history.values():
            if c.acceptors in skip:
                sent |= c.acceptors
        msg = Phase1A(self.round, 0)
        for c in self.history.values():
            for a in sorted(c.acceptors - sent):
                self.emit("acc", a, msg)
                sent.add(a)
        self._check_phase1()

    # -- Phase 1 ----------------------------------------------------------
    def on_phase1b(self, src, msg) -> None:
        if msg.round != self.round or self.phase not in (MATCHMAKING, PHASE1):
            return
        self.phase1[src] = msg
        if self.phase == PHASE1:
            self._check_phase1()

    def _covered(self) -> bool:
        responded = set(self.phase1)
        k, _ = select_value(self.phase1.values())
        for j, c in self.history.items():
            if self.options.round_pruning and not k.is_bottom and j < k:
                continue
            if not c.is_phase1_quorum(responded):
                return False
        return True

    def _check_phase1(self) -> None:
        if self.phase == PHASE1 and self._covered():
            self._finish_phase1()

    def _finish_phase1(self) -> None:
        replies = list(self.phase1.values())
        self.k, values = select_value(replies)
        self.phase1_done = True
        self.phase = PHASE2
        if self.options.fast:
            if self.k.is_bottom or len(values) != 1:
                self._send_phase2(ANY)
            else:
                self._send_phase2(next(iter(values)))
            return
        if not self.k.is_bottom:
            (value,) = values
            self._send_phase2(value)
        elif self.value is not None:
            self._send_phase2(self.value)

    def supply_value(self, value: Value) -> None:
        """Provide the client value after proactive matchmaking."""
        if self.value is None:
            self.value = value
        if self.phase == PHASE2 and self.proposed is None and self.k.is_bottom:
            self._send_phase2(self.value)

    # -- Phase 2 ----------------------------------------------------------
    def _send_phase2(self, value: Value) -> None:
        self.proposed = value
        if not value.is_any:
            self.observe("propose", self.instance, 0, self.round, value)
        msg = Phase2A(self.round, 0, value)
        for a in sorted(self.config.acceptors):
            self.emit("acc", a, msg)

    def on_phase2b(self, src, msg) -> None:
        if self.phase != PHASE2 or msg.round != self.round or self.proposed is None:
            return
        if src not in self.config.acceptors:
            return
        self.phase2.add(src)
        if self.config.is_phase2_quorum(self.phase2):
            self._chosen(self.proposed)

    def on_fast_phase2b(self, src, msg: FastPhase2B) -> None:
        if self.phase != PHASE2 or msg.round != self.round:
            return
        if src not in self.config.acceptors:
            return
        self.fast_votes[src] = msg.value
        voters = {a for a, v in self.fast_votes.items() if v == msg.value}
        if self.config.is_phase2_quorum(voters):
            self._chosen(msg.value)

    def _chosen(self, value: Value) -> None:
        self.phase = CHOSEN
        self.chosen = value
        self.chosen_round = self.round
        self.observe("learned", self.instance, 0, self.round, value)

    def fast_conflict(self) -> bool:
        """True once two acceptors voted differently in the current fast round."""
        return len(set(self.fast_votes.values())) > 1

    def on_nack(self, src, msg: Nack) -> bool:
        """Returns True when the current attempt has been preempted."""
        self.observe_round(msg.round)
        if msg.round > self.round and self.phase in (MATCHMAKING, PHASE1, PHASE2):
            self.phase = IDLE
            return True
        return False

    # -- garbage collection -----------------------------------------------
    def gc_scenario(self):
        if self.phase == CHOSEN and self.chosen_round == self.round:
            return 1
        if self.phase1_done and self.k.is_bottom:
            return 2
        if self.hint_acked:
            return 3
        return None

    def maybe_issue_gc(self):
        """Send GarbageA for the current round when a GC scenario holds."""
        if self.fixed_config is not None or not self.options.gc:
            return None
        scenario = self.gc_scenario()
        if scenario is None and self.options.guard_gc:
            raise GCGuardError(f"no GC scenario holds in round {self.round} ({self.phase})")
        if self.gc_round == self.round:
            return scenario
        self.gc_round = self.round
        self.gc_acks = set()
        msg = GarbageA(self.epoch, self.round)
        for m in self.mm_members:
            self.emit("mm", m, msg)
        return scenario

    def on_garbage_b(self, src, msg) -> None:
        if msg.round != self.gc_round or msg.epoch != self.epoch or self.gc_done:
            return
        self.gc_acks.add(src)
        if len(self.gc_acks) >= self.mm_quorum:
            self.gc_done = True
            self.observe("retire", self.instance, self.gc_round)

    def state(self):
        return (self.phase, self.round, self.highest_seen, self.value, self.proposed,
                self.chosen, self.k, tuple(sorted(self.history.items())), self.gc_round,
                self.gc_done)


class ProposerNode(Node):
    """Hosts one single-decree proposer.

    A ``Propose`` message starts an attempt. With ``retries`` > 0 a preempted
    or stalled attempt is retried after a randomized backoff.
    """

    role = "proposer"

    def __init__(self, node_id, view, config: Configuration, *, journal=None,
                 options=None, retries: int = 0, timeout: int = 40, seed: int = 0):
        super().__init__(node_id, journal)
        self.view = view
        self.config_choice = config
        self.retries = retries
        self.timeout = timeout
        self.rng = random.Random(f"{seed}:{node_id}")
        self.p = Proposer(node_id, self._emit, self._matchmakers, options=options)
        self.p.observe = self.observe
        self.attempts = 0
        self.pending_value: Value | None = None

    def _matchmakers(self):
        return self.view.matchmaker_epoch, tuple(self.view.matchmakers)

    def _emit(self, kind, dst, msg):
        self.send(dst, msg)

    def recover(self, records) -> None:
        for rec in records:
            if rec[0] == "round":
                self.p.observe_round(rec[1])
                self.p.round = max(self.p.round, rec[1])

    def _attempt(self):
        self.attempts += 1
        r = self.p.begin_round(self.pending_value, self.config_choice)
        self.journal.append(("round", r))
        if self.retries:
            self.set_timer("retry", self.timeout)
        self._after()

    def _after(self):
        if self.p.options.gc and self.p.gc_scenario() is not None:
            self.p.maybe_issue_gc()
        elif self.p.options.gc and not self.p.options.guard_gc \
                and self.p.phase != IDLE:
            self.p.maybe_issue_gc()

    def on_propose(self, src, msg):
        if msg.value is not None and self.pending_value is None:
            self.pending_value = msg.value
        if self.p.phase == IDLE:
            self._attempt()
        elif msg.value is not None:
            self.p.supply_value(msg.value)

    def on_match_b(self, src, msg):
        self.p.on_match_b(src, msg)
        self._after()

    def on_phase1b(self, src, msg):
        self.p.on_phase1b(src, msg)
        self._after()

    def on_phase2b(self, src, msg):
        self.p.on_phase2b(src, msg)
        self._after()

    def on_fast_phase2b(self, src, msg):
        self.p.on_fast_phase2b(src, msg)
        if self.p.fast_conflict() and self.p.phase == PHASE2 and self.retries:
            self.p.abandon()
            self._retry_later()

    def on_garbage_b(self, src, msg):
        self.p.on_garbage_b(src, msg)

    def on_nack(self, src, msg):
        if self.p.on_nack(src, msg) and self.retries:
            self._retry_later()

    def _retry_later(self):
        self.set_timer("retry", self.rng.randint(1, self.timeout))

    def on_timer(self, name):
        if name != "retry" or self.p.phase == CHOSEN:
            return
        if self.attempts > self.retries:
            return
        self.p.abandon()
        self._attempt()

    def state(self):
        return self.p.state()
