"""Matchmaker MultiPaxos leader.

The leader owns one active round at a time. Phase 2 runs per slot in that
round's configuration. Moving to a new configuration means moving to the
next round the leader owns: it registers the new configuration with the
matchmakers and, when its previous round is established, skips Phase 1
entirely. While that matchmaking round trip is in flight, commands keep
flowing through the old configuration, so a reconfiguration does not stall
clients.

Once every slot that an older configuration could know about is chosen,
stored on f+1 replicas and acknowledged as chosen by a Phase 2 quorum of the
current configuration, the leader garbage collects the older configurations
at the matchmakers.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from .core import (NOOP, BOTTOM, Chosen, ChosenHint, Configuration, GarbageA, Heartbeat,
                   LeaderElect, MatchA, Phase1A, Phase2A, Redirect, Round, Value,
                   WatermarkRequest, command, majority_configuration, round_successor)
from .election import ELECT, HEARTBEAT, ElectionState
from .node import Node
from .proposer import compute_history

logger = logging.getLogger(__name__)

FOLLOWER, LEADER = "follower", "leader"
MATCHMAKING, PHASE1 = "matchmaking", "phase1"


@dataclass(frozen=True)
class LeaderOptions:
    proactive: bool = True
    bypass: bool = True
    gc: bool = True
    thrifty: bool = False
    guard_gc: bool = True
    heartbeat: int = 10
    deadline_factor: int = 5
    auto_elect: bool = True
    resend_after: int = 30
    phase_timeout: int = 80
    chosen_batch: int = 64
    queue_limit: int = 0  # 0 means unbounded


@dataclass
class Entry:
    value: Value
    round: Round
    config: Configuration
    sent_at: int
    acks: set = field(default_factory=set)
    previous: "Entry | None" = None  # same value proposed in an earlier round


@dataclass
class Setup:
    """A round being established: matchmaking and, unless bypassed, Phase 1."""

    kind: str  # "elect" or "reconfig"
    round: Round
    config: Configuration
    started_at: int
    bypass: bool = False
    sent_at: int = 0
    stage: str = MATCHMAKING
    epoch: int = 0
    matchmakers: tuple = ()
    mm_replies: dict = field(default_factory=dict)
    watermarks: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)
    first_slot: int = 0
    phase1: dict = field(default_factory=dict)


@dataclass
class GcTask:
    round: Round
    boundary: int
    epoch: int = 0
    matchmakers: tuple = ()
    stage: str = "wait"  # wait -> hint -> garbage -> done
    acks: set = field(default_factory=set)
    sent_at: int = 0


def config_label(r: Round) -> str:
    return f"C{r.counter}.{r.owner}.{r.sub}"


class LeaderNode(Node):
    role = "leader"

    def __init__(self, node_id, view, acceptors, *, journal=None, options=None, seed=0):
        super().__init__(node_id, journal)
        self.view = view
        self.options = options or LeaderOptions()
        self.rng = random.Random(f"{seed}:{node_id}")
        self.target_acceptors = tuple(sorted(acceptors))
        self.election = ElectionState(node_id, self.options.heartbeat,
                                      self.options.deadline_factor, self.options.auto_elect)

        self.status = FOLLOWER
        self.round: Round = BOTTOM  # active round (Phase 2 runs here)
        self.config: Configuration | None = None
        self.established = False
        self.setup: Setup | None = None
        self.pending_reconfig = None
        self.max_round: Round = BOTTOM  # largest round ever used by this node

        self.next_slot = 0
        self.chosen: dict = {}  # slot -> Value (None when known chosen but unknown)
        self.chosen_watermark = -1
        self.pending: dict = {}  # slot -> Entry
        self.inflight: dict = {}  # (client, seq) -> slot
        self.queue: list = []
        self.queued_keys: set = set()
        self.announced: set = set()
        self.queued_total = 0
        self.persisted: dict = {}  # replica -> persisted prefix
        self.persisted_watermark = -1
        self.chosen_sent: dict = {}  # replica -> last slot resent
        self.gc: GcTask | None = None

    # -- helpers ----------------------------------------------------------
    @property
    def replicas(self):
        return self.view.replicas

    @property
    def replica_quorum(self) -> int:
        return len(self.view.replicas) // 2 + 1

    def _use_round(self, r: Round) -> None:
        if r > self.max_round:
            self.max_round = r
        self.journal.append(("round", r))
        self.election.own_round_changed(r)

    def recover(self, records) -> None:
        for rec in records:
            if rec[0] == "round" and rec[1] > self.max_round:
                self.max_round = rec[1]
        self.election.highest = max(self.election.highest, self.max_round)

    def start(self) -> None:
        self.election.deadline = self.now + self.election.timeout
        self.set_timer("tick", self.options.heartbeat)

    # -- election ---------------------------------------------------------
    def on_become_leader(self, src, msg):
        self.start_election()

    def start_election(self) -> None:
        counter = max(self.election.highest.counter, self.max_round.counter) + 1
        r = Round(counter, self.node_id, 0)
        self.status = LEADER
        self.established = False
        self.announced = set()
        self.election.became_leader(r, self.now)
        config = majority_configuration(config_label(r), self.target_acceptors)
        self._begin_setup("elect", r, config)
        self.broadcast([p for p in self.view.leaders if p != self.node_id], LeaderElect(r))
        logger.info("%s starts election in round %s", self.node_id, r)

    def _step_down(self, higher: Round) -> None:
        if self.status != LEADER:
            return
        logger.info("%s steps down for %s", self.node_id, higher)
        self.observe("step_down", higher)
        self.status = FOLLOWER
        self.election.leading = False
        self.election.leader = higher.owner
        self.election.deadline = self.now + self.election.timeout
        self.setup = None
        self.established = False
        self.pending.clear()
        self.inflight.clear()
        self.gc = None
        for req in self.queue:
            self.send(req.client, Redirect(higher.owner))
        self.queue.clear()
        self.queued_keys.clear()

    def _seen(self, r: Round) -> None:
        if self.election.observe(r, self.now):
            self._step_down(r)

    def on_heartbeat(self, src, msg):
        self._seen(msg.round)

    def on_leader_elect(self, src, msg):
        self._seen(msg.round)

    def on_nack(self, src, msg):
        r = msg.round
        current = max(self.round, self.setup.round if self.setup else BOTTOM)
        if r <= current:
            return
        if r.owner != self.node_id:
            self._seen(r)
            self._step_down(r)
            return
        # a round of ours from before a restart: move past it
        if r > self.max_round:
            self.max_round = r
        if self.setup is not None:
            s = self.setup
            self._begin_setup(s.kind, round_successor(r), s.config.relabel(
                config_label(round_successor(r))))

    # -- setup (matchmaking and Phase 1) ----------------------------------
    def _begin_setup(self, kind, r: Round, config: Configuration) -> None:
        if r <= self.max_round:
            r = round_successor(self.max_round) if self.max_round.owner == self.node_id \
                else Round(self.max_round.counter + 1, self.node_id, 0)
            config = config.relabel(config_label(r))
        self._use_round(r)
        bypass = kind == "reconfig" and self.options.bypass and self.established
        s = Setup(kind, r, config, self.now, bypass, sent_at=self.now)
        s.epoch, s.matchmakers = self.view.matchmaker_epoch, tuple(self.view.matchmakers)
        self.setup = s
        self.observe("round_config", "log", r, config)
        self.broadcast(s.matchmakers, MatchA(s.epoch, r, config))
        if kind == "elect":
            self.broadcast(self.replicas, WatermarkRequest(r))

    def on_match_b(self, src, msg):
        s = self.setup
        if s is None or s.stage != MATCHMAKING or msg.round != s.round:
            return
        if msg.epoch != s.epoch or src not in s.matchmakers:
            return
        s.mm_replies[src] = msg
        self._advance_setup()

    def on_watermark_reply(self, src, msg):
        s = self.setup
        if s is None or msg.round != s.round:
            return
        s.watermarks[src] = msg.slot
        self._advance_setup()

    def _advance_setup(self) -> None:
        s = self.setup
        if len(s.mm_replies) < len(s.matchmakers) // 2 + 1:
            return
        if s.kind == "elect" and len(s.watermarks) < self.replica_quorum:
            return
        s.history, w = compute_history(s.mm_replies.values())
        self.observe("history", "log", s.round, tuple(sorted(s.history.items())), w)
        if s.bypass:
            self._activate(s.round, s.config, self.next_slot - 1)
            return
        w = self.chosen_watermark
        if s.watermarks:
            w = max(w, max(s.watermarks.values()))
        s.first_slot = w + 1
        s.stage = PHASE1
        if not s.history:
            self._finish_phase1()
            return
        s.sent_at = self.now
        self._send_phase1a()

    def _send_phase1a(self) -> None:
        s = self.setup
        targets = set()
        for c in s.history.values():
            targets |= c.acceptors
        self.broadcast(sorted(targets - set(s.phase1)), Phase1A(s.round, s.first_slot))

    def on_phase1b(self, src, msg):
        s = self.setup
        if s is None or s.stage != PHASE1 or msg.round != s.round:
            return
        s.phase1[src] = msg
        responded = set(s.phase1)
        if all(c.is_phase1_quorum(responded) for c in s.history.values()):
            self._finish_phase1()

    def _finish_phase1(self) -> None:
        s = self.setup
        known = s.first_slot - 1
        hinted = set()
        best: dict = {}  # slot -> (vr, vv)
        for reply in s.phase1.values():
            known = max(known, reply.chosen_prefix)
            hinted.update(reply.chosen_slots)
            for slot, vr, vv in reply.votes:
                cur = best.get(slot)
                if cur is None or vr > cur[0]:
                    best[slot] = (vr, vv)
        # slots known chosen whose values we may not hold: replicas have them
        for slot in range(self.chosen_watermark + 1, known + 1):
            self.chosen.setdefault(slot, None)
            self.pending.pop(slot, None)
        for slot in hinted:
            self.chosen.setdefault(slot, None)
            self.pending.pop(slot, None)
        top = max([known, self.next_slot - 1, *best, *hinted])
        old_pending = self.pending
        self.pending = {}
        self.inflight = {}
        repairs = []
        for slot in range(s.first_slot, top + 1):
            if slot in self.chosen:
                continue
            if slot in best:
                repairs.append((slot, best[slot][1]))
            elif slot in old_pending:
                repairs.append((slot, old_pending[slot].value))
            else:
                repairs.append((slot, NOOP))
        self.next_slot = max(self.next_slot, top + 1)
        self._advance_watermark()
        self._activate(s.round, s.config, top, repairs)

    def _activate(self, r: Round, config: Configuration, boundary: int, repairs=None) -> None:
        old = self.round
        self.round, self.config = r, config
        self.setup = None
        self.established = True
        self.election.own_round_changed(r)
        self.observe("activate", r, config, boundary)
        logger.debug("%s active in %s (previous %s)", self.node_id, r, old)
        if repairs is None:
            # bypass: re-send still pending slots in the new round
            repairs = [(slot, e.value) for slot, e in sorted(self.pending.items())]
        for slot, value in repairs:
            self._propose(slot, value)
        if self.options.gc:
            self.gc = GcTask(r, boundary, self.view.matchmaker_epoch,
                             tuple(self.view.matchmakers), sent_at=self.now)
            if not self.options.guard_gc:
                self._send_garbage()
            self._check_gc()
        self._drain_queue()
        if self.pending_reconfig is not None:
            acceptors, self.pending_reconfig = self.pending_reconfig, None
            self._reconfigure(acceptors)

    # -- reconfiguration --------------------------------------------------
    def on_reconfigure(self, src, msg):
        if self.status != LEADER:
            return
        self._reconfigure(tuple(msg.acceptors))

    def _reconfigure(self, acceptors) -> None:
        self.target_acceptors = tuple(sorted(acceptors))
        s = self.setup
        if s is not None and (s.kind == "elect" or s.stage == PHASE1):
            self.pending_reconfig = self.target_acceptors
            return
        base = s.round if s is not None else self.round
        r = round_successor(base)
        config = majority_configuration(config_label(r), self.target_acceptors)
        self._begin_setup("reconfig", r, config)

    # -- Phase 2 ----------------------------------------------------------
    def _can_propose(self) -> bool:
        if self.status != LEADER or not self.established:
            return False
        s = self.setup
        if s is None:
            return True
        return s.stage == MATCHMAKING and self.options.proactive

    def on_client_request(self, src, msg):
        if self.status != LEADER:
            leader = self.election.leader
            if leader and leader != self.node_id:
                self.send(msg.client, Redirect(leader))
            return
        if msg.client not in self.announced:
            # tell clients that still talk to an old leader where to go
            self.announced.add(msg.client)
            self.send(msg.client, Redirect(self.node_id))
        key = (msg.client, msg.seq)
        if key in self.inflight or key in self.queued_keys:
            return
        if self._can_propose():
            self._assign(msg)
            return
        if self.options.queue_limit and len(self.queue) >= self.options.queue_limit:
            return
        self.queue.append(msg)
        self.queued_keys.add(key)
        self.queued_total += 1

    def _assign(self, req) -> None:
        slot = self.next_slot
        self.next_slot += 1
        self.inflight[(req.client, req.seq)] = slot
        self._propose(slot, command(req.payload, req.client, req.seq))

    def _drain_queue(self) -> None:
        while self.queue and self._can_propose():
            req = self.queue.pop(0)
            self.queued_keys.discard((req.client, req.seq))
            self._assign(req)

    def _propose(self, slot: int, value: Value, everyone: bool = False) -> None:
        e = Entry(value, self.round, self.config, self.now)
        prev = self.pending.get(slot)
        if prev is not None and prev.value == value and prev.round != self.round:
            e.previous = prev
            prev.previous = None
        self.pending[slot] = e
        if value.client:
            self.inflight[(value.client, value.seq)] = slot
        self.observe("propose", "log", slot, self.round, value)
        msg = Phase2A(self.round, slot, value)
        if self.options.thrifty and not everyone:
            quorums = sorted(sorted(q) for q in self.config.phase2_quorums)
            targets = self.rng.choice(quorums)
        else:
            targets = sorted(self.config.acceptors)
        self.broadcast(targets, msg)

    def on_phase2b(self, src, msg):
        e = self.pending.get(msg.slot)
        if e is None:
            return
        if msg.round != e.round:
            e = e.previous
            if e is None or msg.round != e.round:
                return
        if src not in e.config.acceptors:
            return
        e.acks.add(src)
        if e.config.is_phase2_quorum(e.acks):
            self._on_chosen(msg.slot, e.value)

    def _on_chosen(self, slot: int, value: Value) -> None:
        self.pending.pop(slot, None)
        if value.client:
            self.inflight.pop((value.client, value.seq), None)
        if self.chosen.get(slot) is None:
            self.chosen[slot] = value
        self.observe("learned", "log", slot, value)
        self.broadcast(self.replicas, Chosen(slot, value))
        self._advance_watermark()
        self._check_gc()

    def _advance_watermark(self) -> None:
        w = self.chosen_watermark
        chosen = self.chosen
        while w + 1 in chosen:
            w += 1
        self.chosen_watermark = w

    # -- replicas ---------------------------------------------------------
    def on_prefix_persisted(self, src, msg):
        if msg.slot <= self.persisted.get(src, -1):
            return
        self.persisted[src] = msg.slot
        marks = sorted(self.persisted.values(), reverse=True)
        q = self.replica_quorum
        if len(marks) >= q:
            self.persisted_watermark = max(self.persisted_watermark, marks[q - 1])
        self._check_gc()

    # -- garbage collection -----------------------------------------------
    def _check_gc(self) -> None:
        g = self.gc
        if g is None or g.stage != "wait":
            return
        if self.chosen_watermark < g.boundary or self.persisted_watermark < g.boundary:
            return
        if g.boundary < 0:
            self._send_garbage()
            return
        g.stage = "hint"
        g.acks = set()
        g.sent_at = self.now
        self.broadcast(sorted(self.config.acceptors), ChosenHint(g.round, g.boundary))

    def on_hint_ack(self, src, msg):
        g = self.gc
        if g is None or g.stage != "hint" or msg.round != g.round or msg.up_to < g.boundary:
            return
        if src not in self.config.acceptors:
            return
        g.acks.add(src)
        if self.config.is_phase2_quorum(g.acks):
            self._send_garbage()

    def _send_garbage(self) -> None:
        g = self.gc
        g.stage = "garbage"
        g.acks = set()
        g.sent_at = self.now
        g.epoch, g.matchmakers = self.view.matchmaker_epoch, tuple(self.view.matchmakers)
        self.broadcast(g.matchmakers, GarbageA(g.epoch, g.round))

    def on_garbage_b(self, src, msg):
        g = self.gc
        if g is None or g.stage != "garbage" or msg.round != g.round or msg.epoch != g.epoch:
            return
        g.acks.add(src)
        if len(g.acks) >= len(g.matchmakers) // 2 + 1:
            g.stage = "done"
            self.observe("retire", "log", g.round)

    # -- timers -----------------------------------------------------------
    def on_timer(self, name):
        if name != "tick":
            return
        self.set_timer("tick", self.options.heartbeat)
        action = self.election.tick(self.now)
        if action == HEARTBEAT:
            r = self.setup.round if self.setup is not None else self.round
            self.broadcast([p for p in self.view.leaders if p != self.node_id], Heartbeat(r))
        elif action is not None and action[0] == ELECT and self.status != LEADER:
            self.start_election()
            return
        if self.status == LEADER:
            self._resend()

    def _resend(self) -> None:
        now = self.now
        s = self.setup
        if s is not None and now - s.started_at >= self.options.phase_timeout:
            # stalled: retry in our next round; bypass stays valid since no
            # Phase 2 message was sent in the abandoned round
            r = round_successor(s.round)
            self._begin_setup(s.kind, r, s.config.relabel(config_label(r)))
            return
        if s is not None and now - s.sent_at >= self.options.resend_after:
            s.sent_at = now
            if s.stage == MATCHMAKING:
                self.broadcast([m for m in s.matchmakers if m not in s.mm_replies],
                               MatchA(s.epoch, s.round, s.config))
                if s.kind == "elect":
                    self.broadcast([r for r in self.replicas if r not in s.watermarks],
                                   WatermarkRequest(s.round))
            else:
                self._send_phase1a()
        if self.established and (s is None or s.stage == MATCHMAKING):
            stale = [(slot, e) for slot, e in self.pending.items()
                     if now - e.sent_at >= self.options.resend_after]
            for slot, e in stale:
                self._propose(slot, e.value, everyone=True)
        g = self.gc
        if g is not None and g.stage in ("hint", "garbage") \
                and now - g.sent_at >= self.options.resend_after:
            if g.stage == "hint" and g.round == self.round:
                g.sent_at = now
                self.broadcast(sorted(self.config.acceptors), ChosenHint(g.round, g.boundary))
            elif g.stage == "garbage":
                self._send_garbage()
        self._resend_chosen()

    def _resend_chosen(self) -> None:
        # resend to replicas whose persisted prefix did not move since the
        # previous tick
        w = self.chosen_watermark
        for rep in self.replicas:
            have = self.persisted.get(rep, -1)
            if have >= w:
                continue
            if self.chosen_sent.get(rep) != have:
                self.chosen_sent[rep] = have
                continue
            for slot in range(have + 1, min(w, have + self.options.chosen_batch) + 1):
                v = self.chosen.get(slot)
                if v is not None:
                    self.send(rep, Chosen(slot, v))

    # -- inspection -------------------------------------------------------
    def stats(self) -> dict:
        return {"queued_total": self.queued_total, "next_slot": self.next_slot,
                "chosen_watermark": self.chosen_watermark, "leader": self.status == LEADER}

    def state(self):
        s = self.setup
        return (self.status, self.round, self.config, self.established, self.max_round,
                (s.kind, s.round, s.stage) if s else None,
                self.next_slot, self.chosen_watermark, dict(self.chosen),
                {slot: (e.value, e.round) for slot, e in self.pending.items()},
                tuple((r.client, r.seq) for r in self.queue),
                self.persisted_watermark,
                (self.gc.round, self.gc.boundary, self.gc.stage) if self.gc else None)
