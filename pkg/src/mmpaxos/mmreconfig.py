"""Replacing the matchmaker set.

The driver stops the old matchmakers, merges the logs of f+1 of them,
bootstraps the new matchmakers with the merged log, and gets the new set
chosen by a single-decree Paxos instance whose acceptors are the old
matchmakers. Only the chosen set is activated, so two drivers racing with
different new sets cannot both succeed.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass

from .core import (Activate, Bootstrap, Phase1B, Phase2B, ReconfigPaxos, StopA, Nack,
                   Value, ValueKind, majority_configuration)
from .node import ConsistencyError, Node
from .proposer import CHOSEN, IDLE, Proposer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MergeResult:
    log: dict
    gc_watermark: object


def merge_stop_replies(replies) -> MergeResult:
    """Merge StopB replies (or ``(log, watermark)`` pairs) from old matchmakers.

    The watermark is the largest one reported; the log is the union of the
    reported logs without entries below that watermark.
    """
    pairs = []
    for r in replies:
        if hasattr(r, "gc_watermark"):
            pairs.append((dict(r.log), r.gc_watermark))
        else:
            log, w = r
            pairs.append((dict(log), w))
    if not pairs:
        raise ValueError("no StopB replies to merge")
    w = max(p[1] for p in pairs)
    merged: dict = {}
    for log, _ in pairs:
        for rnd, config in log.items():
            if rnd < w:
                continue
            have = merged.get(rnd)
            if have is not None and have != config:
                raise ConsistencyError(f"round {rnd} has two configurations")
            merged[rnd] = config
    return MergeResult(dict(sorted(merged.items())), w)


def encode_members(members) -> bytes:
    return ",".join(sorted(members)).encode()


def decode_members(payload: bytes) -> tuple:
    return tuple(payload.decode().split(",")) if payload else ()


IDLE_STAGE, STOPPING, BOOTSTRAPPING, CHOOSING, ACTIVATING, DONE = (
    "idle", "stopping", "bootstrapping", "choosing", "activating", "done")


class ReconfigDriverNode(Node):
    """Drives one matchmaker reconfiguration at a time."""

    role = "mm-driver"

    def __init__(self, node_id, view, *, journal=None, retry: int = 40, seed: int = 0):
        super().__init__(node_id, journal)
        self.view = view
        self.retry = retry
        self.rng = random.Random(f"{seed}:{node_id}")
        self.stage = IDLE_STAGE
        self.target: tuple = ()
        self.old_epoch = 0
        self.old_members: tuple = ()
        self.stop_replies: dict = {}
        self.merge: MergeResult | None = None
        self.boot_acks: set = set()
        self.chosen_members: tuple = ()
        self.activate_acks: set = set()
        self.proposer: Proposer | None = None
        self.completed: list = []  # (old epoch, members)

    def _emit(self, kind, dst, msg):
        self.send(dst, ReconfigPaxos(self.old_epoch, msg))

    def on_reconfigure_matchmakers(self, src, msg):
        if self.stage not in (IDLE_STAGE, DONE):
            return
        self.target = tuple(sorted(msg.members))
        self.old_epoch = self.view.matchmaker_epoch
        self.old_members = tuple(self.view.matchmakers)
        self.stop_replies = {}
        self.merge = None
        self.boot_acks = set()
        self.activate_acks = set()
        self.chosen_members = ()
        config = majority_configuration(f"mm{self.old_epoch}", self.old_members)
        self.proposer = Proposer(self.node_id, self._emit, fixed_config=config,
                                 instance=("mm", self.old_epoch))
        self.proposer.observe = self.observe
        self.stage = STOPPING
        self.observe("mm_reconfig_start", self.old_epoch, self.target)
        self._stop()
        self.set_timer("retry", self.retry)

    @property
    def _old_quorum(self) -> int:
        return len(self.old_members) // 2 + 1

    def _stop(self) -> None:
        self.broadcast(self.old_members, StopA(self.old_epoch))

    def on_stop_b(self, src, msg):
        if self.stage != STOPPING or msg.epoch != self.old_epoch or src not in self.old_members:
            return
        self.stop_replies[src] = msg
        if len(self.stop_replies) < self._old_quorum:
            return
        self.merge = merge_stop_replies(self.stop_replies.values())
        self.stage = BOOTSTRAPPING
        self._bootstrap()

    def _bootstrap(self) -> None:
        m = self.merge
        msg = Bootstrap(self.old_epoch + 1, tuple(m.log.items()), m.gc_watermark)
        self.broadcast([n for n in self.target if n not in self.boot_acks], msg)

    def on_bootstrap_ack(self, src, msg):
        if self.stage != BOOTSTRAPPING or msg.epoch != self.old_epoch + 1:
            return
        self.boot_acks.add(src)
        if len(self.boot_acks) >= len(self.target) // 2 + 1:
            self.stage = CHOOSING
            value = Value(encode_members(self.target), ValueKind.COMMAND, self.node_id,
                          self.old_epoch)
            self.proposer.begin_round(value, None)

    def on_reconfig_paxos(self, src, msg):
        if msg.epoch != self.old_epoch or self.stage != CHOOSING:
            return
        inner = msg.inner
        p = self.proposer
        if isinstance(inner, Phase1B):
            p.on_phase1b(src, inner)
        elif isinstance(inner, Phase2B):
            p.on_phase2b(src, inner)
        elif isinstance(inner, Nack):
            if p.on_nack(src, inner):
                self.set_timer("retry", self.rng.randint(1, self.retry))
            return
        if p.phase == CHOSEN:
            self.chosen_members = decode_members(p.chosen.payload)
            self.observe("mm_chosen", self.old_epoch, self.chosen_members)
            self.stage = ACTIVATING
            self._activate()

    def _activate(self) -> None:
        m = self.merge
        msg = Activate(self.old_epoch + 1, self.chosen_members, tuple(m.log.items()),
                       m.gc_watermark)
        self.broadcast([n for n in self.chosen_members if n not in self.activate_acks], msg)

    def on_activate_ack(self, src, msg):
        if self.stage != ACTIVATING or msg.epoch != self.old_epoch + 1:
            return
        if src not in self.chosen_members:
            return
        self.activate_acks.add(src)
        new_epoch = self.old_epoch + 1
        if len(self.activate_acks) >= len(self.chosen_members) // 2 + 1 \
                and self.view.matchmaker_epoch < new_epoch:
            self.view.update(matchmaker_epoch=new_epoch, matchmakers=self.chosen_members)
            self.observe("mm_view", new_epoch, self.chosen_members)
        if len(self.activate_acks) == len(self.chosen_members):
            self.stage = DONE
            self.completed.append((self.old_epoch, self.chosen_members))
            # the old set may be shut down now
            self.observe("mm_retire", self.old_epoch)

    def on_timer(self, name):
        if name != "retry" or self.stage in (IDLE_STAGE, DONE):
            return
        self.set_timer("retry", self.retry)
        if self.stage == STOPPING:
            self._stop()
        elif self.stage == BOOTSTRAPPING:
            self._bootstrap()
        elif self.stage == CHOOSING:
            p = self.proposer
            if p.phase != CHOSEN:
                p.abandon()
                if p.phase == IDLE:
                    p.begin_round(p.value, None)
        elif self.stage == ACTIVATING:
            self._activate()

    def state(self):
        p = self.proposer.state() if self.proposer else None
        return (self.stage, self.old_epoch, self.target, self.chosen_members, p)
