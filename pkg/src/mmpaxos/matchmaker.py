"""Matchmaker node.

A matchmaker stores, per round, the configuration a proposer registered for
that round, and tells each new proposer which configurations came before it.
Garbage collection deletes old entries and raises a watermark below which
new rounds are refused. A stopped matchmaker freezes its state so that it
can be replaced by a new matchmaker set.

Matchmaker sets are numbered by epoch. One node can belong to several
epochs (for instance when the new set overlaps the old one), so a node keeps
one ``MatchmakerState`` per epoch. The matchmakers of an epoch also act as
acceptors of the single-decree instance that picks the next set.
"""
from __future__ import annotations

import logging

from .acceptor import AcceptorState
from .core import (BOTTOM, ActivateAck, BootstrapAck, GarbageA, GarbageB, MatchA,
                   MatchB, Nack, Phase1A, Phase2A, ReconfigPaxos, Round, StopB)
from .node import ConsistencyError, Node

logger = logging.getLogger(__name__)


class MatchmakerState:
    """Log of (round -> configuration) plus the GC watermark."""

    # Mutants flip this to accept rounds at or below the highest one seen.
    enforce_monotone = True

    def __init__(self):
        self.log: dict = {}
        self.gc_watermark: Round = BOTTOM
        self.highest: Round = BOTTOM
        self.stopped = False
        self.active = True
        self.fresh = True

    def handle_match_a(self, msg: MatchA):
        """Returns a MatchB, or None when the request must be ignored."""
        if self.stopped:
            return None
        i = msg.round
        if i < self.gc_watermark:
            return None
        if self.enforce_monotone and self.highest >= i:
            if not (i == self.highest and self.log.get(i) == msg.config):
                return None
            # retransmitted request for the newest round: reply again
        history = tuple(sorted((j, c) for j, c in self.log.items() if j < i))
        self.log[i] = msg.config
        if i > self.highest:
            self.highest = i
        self.fresh = False
        return MatchB(msg.epoch, i, self.gc_watermark, history)

    def handle_garbage_a(self, msg: GarbageA):
        if self.stopped:
            return None
        i = msg.round
        for j in [j for j in self.log if j < i]:
            del self.log[j]
        if i > self.gc_watermark:
            self.gc_watermark = i
        self.fresh = False
        return GarbageB(msg.epoch, i)

    def handle_stop_a(self, epoch: int) -> StopB:
        self.stopped = True
        return StopB(epoch, tuple(sorted(self.log.items())), self.gc_watermark)

    def bootstrap(self, log, gc_watermark: Round) -> None:
        if not self.fresh or self.log or not self.gc_watermark.is_bottom:
            raise ValueError("bootstrap requires a fresh matchmaker")
        self.log = dict(log)
        self.gc_watermark = gc_watermark
        self.highest = max(self.log, default=BOTTOM)
        self.fresh = False

    def nack_round(self) -> Round:
        return max(self.highest, self.gc_watermark)

    def state(self):
        return (tuple(sorted(self.log.items())), self.gc_watermark, self.highest,
                self.stopped, self.active)


class MatchmakerNode(Node):
    role = "matchmaker"
    state_class = MatchmakerState

    def __init__(self, node_id, journal=None, epochs=(0,)):
        super().__init__(node_id, journal)
        self.epochs: dict = {}
        self.paxos: dict = {}  # epoch -> acceptor of the next-set instance
        for e in epochs:
            self.epochs[e] = self.state_class()

    # -- recovery ---------------------------------------------------------
    def recover(self, records) -> None:
        for rec in records:
            kind, epoch = rec[0], rec[1]
            if kind == "match":
                st = self.epochs.setdefault(epoch, self.state_class())
                st.log[rec[2]] = rec[3]
                st.highest = max(st.highest, rec[2])
                st.fresh = False
            elif kind == "gc":
                st = self.epochs.setdefault(epoch, self.state_class())
                st.handle_garbage_a(GarbageA(epoch, rec[2]))
            elif kind == "stop":
                self.epochs.setdefault(epoch, self.state_class()).stopped = True
            elif kind == "bootstrap":
                st = self.state_class()
                st.active = False
                st.bootstrap(rec[2], rec[3])
                self.epochs[epoch] = st
            elif kind == "activate":
                st = self.epochs.get(epoch)
                if st is None:
                    st = self.epochs[epoch] = self.state_class()
                    st.bootstrap(rec[2], rec[3])
                st.active = True
            elif kind == "paxos":
                self.paxos.setdefault(epoch, AcceptorState()).apply_record(rec[2])

    def _serving(self, epoch):
        st = self.epochs.get(epoch)
        if st is None or not st.active or st.stopped:
            return None
        return st

    # -- Matchmaking ------------------------------------------------------
    def on_match_a(self, src, msg):
        st = self._serving(msg.epoch)
        if st is None:
            return
        reply = st.handle_match_a(msg)
        if reply is None:
            self.send(src, Nack(st.nack_round()))
            return
        self.journal.append(("match", msg.epoch, msg.round, msg.config))
        self.observe("match_b", msg.epoch, msg.round, msg.config, reply.gc_watermark,
                     reply.history)
        self.send(src, reply)

    def on_garbage_a(self, src, msg):
        st = self._serving(msg.epoch)
        if st is None:
            return
        reply = st.handle_garbage_a(msg)
        self.journal.append(("gc", msg.epoch, msg.round))
        self.observe("gc", msg.epoch, msg.round)
        self.send(src, reply)

    # -- matchmaker reconfiguration ---------------------------------------
    def on_stop_a(self, src, msg):
        st = self.epochs.get(msg.epoch)
        if st is None or not st.active:
            return
        if not st.stopped:
            self.journal.append(("stop", msg.epoch))
        self.send(src, st.handle_stop_a(msg.epoch))

    def on_bootstrap(self, src, msg):
        st = self.epochs.get(msg.epoch)
        if st is None:
            st = self.state_class()
            st.active = False
            st.bootstrap(msg.log, msg.gc_watermark)
            self.epochs[msg.epoch] = st
            self.journal.append(("bootstrap", msg.epoch, msg.log, msg.gc_watermark))
        else:
            # a competing driver may bootstrap the same epoch with another
            # merge; both merges are valid, the first one stays
            logger.debug("%s already bootstrapped epoch %s", self.node_id, msg.epoch)
        self.send(src, BootstrapAck(msg.epoch))

    def on_activate(self, src, msg):
        st = self.epochs.get(msg.epoch)
        if st is None:
            st = self.state_class()
            st.bootstrap(msg.log, msg.gc_watermark)
            self.epochs[msg.epoch] = st
        if not st.active:
            st.active = True
            self.journal.append(("activate", msg.epoch, msg.log, msg.gc_watermark))
            self.observe("mm_active", msg.epoch)
        self.send(src, ActivateAck(msg.epoch))

    def on_reconfig_paxos(self, src, msg):
        # Stopped matchmakers keep serving this instance: it is how the
        # replacement set gets chosen.
        if msg.epoch not in self.epochs or not self.epochs[msg.epoch].active:
            return
        acc = self.paxos.setdefault(msg.epoch, AcceptorState())
        inner = msg.inner
        instance = ("mm", msg.epoch)
        if isinstance(inner, Phase1A):
            reply = acc.handle_phase1a(inner)
            if reply is not None:
                self.journal.append(("paxos", msg.epoch, ("promise", inner.round)))
        elif isinstance(inner, Phase2A):
            reply = acc.handle_phase2a(inner)
            if reply is not None:
                self.journal.append(("paxos", msg.epoch,
                                     ("vote", inner.slot, inner.round, inner.value)))
                self.observe("vote", instance, inner.slot, inner.round, inner.value)
        else:
            raise ConsistencyError(f"unexpected reconfiguration message {inner!r}")
        if reply is None:
            reply = Nack(acc.promised)
        self.send(src, ReconfigPaxos(msg.epoch, reply))

    def state(self):
        return (tuple((e, st.state()) for e, st in sorted(self.epochs.items())),
                tuple((e, acc.state()) for e, acc in sorted(self.paxos.items())))
