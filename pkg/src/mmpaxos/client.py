"""Closed-loop clients.

A client keeps exactly one command outstanding: it waits for the reply and
then immediately sends the next command. On timeout it broadcasts the
command to every leader; non-leaders redirect it.
"""
from __future__ import annotations

from .core import ClientRequest, FastPropose, Value
from .node import Node


class ClientNode(Node):
    role = "client"

    def __init__(self, node_id, view, *, payload=b"\x00", timeout: int = 100,
                 start_at: int = 0, max_requests: int = 0, payloads=None):
        super().__init__(node_id)
        self.view = view
        self.payload = payload
        self.payloads = payloads  # optional callable seq -> payload
        self.timeout = timeout
        self.start_at = start_at
        self.max_requests = max_requests
        self.leader = view.leaders[0] if view.leaders else ""
        self.seq = 0
        self.sent_at = 0
        self.outstanding = False
        self.stopped = False
        self.latencies: list = []  # (reply time, latency)
        self.replies: dict = {}

    def start(self) -> None:
        self.set_timer("begin", max(self.start_at - self.now, 0))

    def stop(self) -> None:
        self.stopped = True

    def _request(self) -> ClientRequest:
        payload = self.payloads(self.seq) if self.payloads else self.payload
        return ClientRequest(self.node_id, self.seq, payload)

    def _send_next(self) -> None:
        if self.stopped or (self.max_requests and self.seq >= self.max_requests):
            self.outstanding = False
            return
        self.seq += 1
        self.sent_at = self.now
        self.outstanding = True
        self.send(self.leader, self._request())
        self.set_timer("timeout", self.timeout)

    def on_timer(self, name):
        if name == "begin":
            if not self.outstanding:
                self._send_next()
        elif name == "timeout" and self.outstanding:
            self.broadcast(self.view.leaders, self._request())
            self.set_timer("timeout", self.timeout)

    def on_client_reply(self, src, msg):
        if not self.outstanding or msg.seq != self.seq:
            return
        self.outstanding = False
        self.latencies.append((self.now, self.now - self.sent_at))
        self.replies[msg.seq] = msg.payload
        self._send_next()

    def on_redirect(self, src, msg):
        if msg.leader and msg.leader != self.leader:
            self.leader = msg.leader
            if self.outstanding and src != msg.leader:
                self.send(self.leader, self._request())

    def state(self):
        return (self.seq, self.outstanding, self.leader)


class FastClientNode(Node):
    """Sends one value straight to the acceptors of a Fast Paxos round."""

    role = "fast-client"

    def __init__(self, node_id, acceptors, value: Value, journal=None):
        super().__init__(node_id, journal)
        self.acceptors = tuple(acceptors)
        self.value = value

    def start(self) -> None:
        self.broadcast(self.acceptors, FastPropose(self.value))
