"""Host-independent node base class.

A node is a single-threaded state machine. Hosts (the simulator, the
exhaustive explorer, the asyncio runtime) feed it one message or timer at a
time and then drain its outbox, timer requests and observations. Nodes never
touch sockets or clocks directly; ``self.now`` is set by the host before
every delivery.
"""
from __future__ import annotations

import hashlib
import logging

logger = logging.getLogger(__name__)


class ConsistencyError(RuntimeError):
    """Raised when a node detects a safety violation it must not mask."""


class MemoryJournal:
    """Append-only record list; survives simulated crashes because the
    simulator keeps it outside the node object."""

    def __init__(self):
        self.records = []

    def append(self, record) -> None:
        self.records.append(record)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


class Node:
    role = "node"

    def __init__(self, node_id: str, journal=None):
        self.node_id = node_id
        self.now = 0
        self.journal = journal if journal is not None else MemoryJournal()
        self.outbox = []
        self.timer_requests = []
        self.observations = []
        self.halted = False
        self._dispatch = _dispatch_table(type(self))

    # -- effects ----------------------------------------------------------
    def send(self, dst: str, msg) -> None:
        self.outbox.append((dst, msg))

    def broadcast(self, dsts, msg) -> None:
        out = self.outbox
        for dst in dsts:
            out.append((dst, msg))

    def set_timer(self, name: str, delay) -> None:
        self.timer_requests.append((name, delay))

    def cancel_timer(self, name: str) -> None:
        self.timer_requests.append((name, None))

    def observe(self, kind: str, *data) -> None:
        self.observations.append((kind, self.node_id, *data))

    def drain(self):
        out, timers, obs = self.outbox, self.timer_requests, self.observations
        self.outbox, self.timer_requests, self.observations = [], [], []
        return out, timers, obs

    # -- entry points -----------------------------------------------------
    def start(self) -> None:
        """Called once by the host after construction or recovery."""

    def recover(self, records) -> None:
        """Rebuild durable state from journal records after a restart."""

    def handle(self, src: str, msg) -> None:
        if self.halted:
            return
        handler = self._dispatch.get(type(msg))
        if handler is None:
            logger.debug("%s ignores %s from %s", self.node_id, type(msg).__name__, src)
            return
        try:
            handler(self, src, msg)
        except ConsistencyError as exc:
            self.halted = True
            self.observe("halt", str(exc))

    def on_timer(self, name: str) -> None:
        pass

    def on_timer_fire(self, src, msg) -> None:
        # replay hosts inject timer expiries as messages
        self.on_timer(msg.name)

    # -- pickling (used by the exhaustive explorer) ----------------------
    def __getstate__(self):
        d = dict(self.__dict__)
        d.pop("_dispatch", None)
        return d

    def __setstate__(self, d):
        self.__dict__.update(d)
        self._dispatch = _dispatch_table(type(self))

    # -- inspection -------------------------------------------------------
    def state(self):
        """Canonical protocol state (no timing or transport details)."""
        return ()

    def stats(self) -> dict:
        """Counters exposed to benchmarks; not part of the protocol state."""
        return {}

    def state_hash(self) -> bytes:
        from .runtime.codec import pack

        return hashlib.sha256(pack((self.role, self.node_id, self.state()))).digest()


_TABLES = {}


def _dispatch_table(cls):
    table = _TABLES.get(cls)
    if table is None:
        from . import core

        table = {}
        for msg_cls in core.MESSAGE_TYPES:
            fn = getattr(cls, "on_" + _snake(msg_cls.__name__), None)
            if fn is not None:
                table[msg_cls] = fn
        _TABLES[cls] = table
    return table


def _snake(name: str) -> str:
    out = []
    for i, ch in enumerate(name):
        prev = name[i - 1] if i else ""
        if ch.isupper() and prev and not prev.isdigit() and (
                not prev.isupper() or (i + 1 < len(name) and name[i + 1].islower())):
            out.append("_")
        out.append(ch.lower())
    return "".join(out)
