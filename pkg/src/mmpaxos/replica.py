"""State machine replicas.

Replicas receive chosen commands, execute them in log order and answer
clients. Each command is executed at most once per (client, seq): a command
that was chosen twice (a client retried after a lost reply) is skipped the
second time and answered from the client table.
"""
from __future__ import annotations

import logging

from .core import ClientReply, PrefixPersisted, ReplicaFetch, ReplicaFetchReply, Value, \
    WatermarkReply
from .node import ConsistencyError, Node

logger = logging.getLogger(__name__)


class NoopApp:
    """One-byte no-op commands; every reply is empty."""

    def apply(self, payload: bytes) -> bytes:
        return b""

    def state(self):
        return ()


class KVApp:
    """Tiny key-value register map.

    Commands are ``b"set key value"`` or ``b"get key"``.
    """

    def __init__(self):
        self.data: dict = {}

    def apply(self, payload: bytes) -> bytes:
        parts = payload.split(b" ", 2)
        if parts[0] == b"set" and len(parts) == 3:
            self.data[parts[1]] = parts[2]
            return b"ok"
        if parts[0] == b"get" and len(parts) == 2:
            return self.data.get(parts[1], b"")
        return b"error"

    def state(self):
        return dict(self.data)


APPS = {"noop": NoopApp, "kv": KVApp}


class ReplicaState:
    def __init__(self, app=None):
        self.app = app if app is not None else NoopApp()
        self.log: dict = {}
        self.exec_watermark = -1
        self.client_table: dict = {}  # client -> (seq, reply)
        self.executed: list = []  # (slot, value) of executed commands

    def insert(self, slot: int, value: Value) -> bool:
        """Store a chosen value; returns False for a duplicate."""
        if slot <= self.exec_watermark:
            have = self.log.get(slot)
            if have is not None and have != value:
                raise ConsistencyError(f"slot {slot}: chosen {value!r} but executed {have!r}")
            return False
        have = self.log.get(slot)
        if have is not None:
            if have != value:
                raise ConsistencyError(f"slot {slot}: chosen {value!r} and {have!r}")
            return False
        self.log[slot] = value
        return True

    def execute(self):
        """Execute the contiguous prefix; returns [(slot, value, reply or None)]."""
        out = []
        log = self.log
        while self.exec_watermark + 1 in log:
            slot = self.exec_watermark + 1
            value = log[slot]
            self.exec_watermark = slot
            reply = None
            if not value.is_noop:
                last = self.client_table.get(value.client) if value.client else None
                if last is not None and value.seq <= last[0]:
                    reply = last[1] if value.seq == last[0] else None
                else:
                    reply = self.app.apply(value.payload)
                    if value.client:
                        self.client_table[value.client] = (value.seq, reply)
                    self.executed.append((slot, value))
            out.append((slot, value, reply))
        return out

    def snapshot_watermark(self) -> int:
        return self.exec_watermark


class ReplicaNode(Node):
    role = "replica"

    def __init__(self, node_id, view, *, journal=None, app=None, ack_delay: int = 0,
                 fetch_after: int = 30):
        super().__init__(node_id, journal)
        self.view = view
        self.r = ReplicaState(app)
        self.ack_delay = ack_delay
        self.fetch_after = fetch_after
        self.leader = ""
        self.acked = -1
        self.ack_scheduled = False
        self.gap_since = None

    def recover(self, records) -> None:
        for rec in records:
            if rec[0] == "chosen":
                self.r.insert(rec[1], rec[2])
        self.r.execute()

    def start(self) -> None:
        self.set_timer("fetch", self.fetch_after)

    def _index(self) -> int:
        reps = list(self.view.replicas)
        return reps.index(self.node_id) if self.node_id in reps else 0

    def on_chosen(self, src, msg):
        self.leader = src
        self._store(msg.slot, msg.value)

    def _store(self, slot, value) -> None:
        if not self.r.insert(slot, value):
            self._ack()
            return
        self.journal.append(("chosen", slot, value))
        n = max(len(self.view.replicas), 1)
        me = self._index()
        for s, v, reply in self.r.execute():
            self.observe("execute", s, v)
            if reply is not None and v.client and s % n == me:
                self.send(v.client, ClientReply(v.client, v.seq, reply))
        if len(self.r.log) > self.r.exec_watermark + 1 and self.gap_since is None:
            self.gap_since = self.now
        elif len(self.r.log) == self.r.exec_watermark + 1:
            self.gap_since = None
        self._ack()

    def _ack(self) -> None:
        if not self.leader or self.r.exec_watermark < 0:
            return
        if self.ack_delay <= 0:
            if self.r.exec_watermark > self.acked:
                self.acked = self.r.exec_watermark
                self.send(self.leader, PrefixPersisted(self.acked))
            elif self.r.exec_watermark == self.acked:
                # duplicate delivery: the previous ack may have been lost
                self.send(self.leader, PrefixPersisted(self.acked))
            return
        if not self.ack_scheduled:
            self.ack_scheduled = True
            self.set_timer("ack", self.ack_delay)

    def on_timer(self, name):
        if name == "ack":
            self.ack_scheduled = False
            if self.leader and self.r.exec_watermark >= 0:
                self.acked = self.r.exec_watermark
                self.send(self.leader, PrefixPersisted(self.acked))
        elif name == "fetch":
            self.set_timer("fetch", self.fetch_after)
            if self.gap_since is not None and self.now - self.gap_since >= self.fetch_after:
                self.gap_since = self.now
                peers = [p for p in self.view.replicas if p != self.node_id]
                self.broadcast(peers, ReplicaFetch(self.r.exec_watermark + 1))

    def on_watermark_request(self, src, msg):
        self.send(src, WatermarkReply(msg.round, self.r.exec_watermark))

    def on_replica_fetch(self, src, msg):
        entries = []
        for slot in range(msg.first_slot, msg.first_slot + 64):
            v = self.r.log.get(slot)
            if v is None:
                break
            entries.append((slot, v))
        if entries:
            self.send(src, ReplicaFetchReply(tuple(entries)))

    def on_replica_fetch_reply(self, src, msg):
        for slot, value in msg.entries:
            self._store(slot, value)

    def state(self):
        return (dict(self.r.log), self.r.exec_watermark,
                dict(self.r.client_table), self.r.app.state())
