"""Asyncio host that runs one node state machine over TCP.

Inbound frames from every connection go through one queue, so the node sees
one message or timer at a time. Outbound sends are fire-and-forget: each
peer has a connector task that reconnects with backoff, and frames queued
while a peer is down are dropped once the queue is full. The protocol
tolerates loss, so nothing is retransmitted at this layer.
"""
from __future__ import annotations

import asyncio
import collections
import logging
import time

from ..core import (Envelope, Nack, StateHashReply, StateHashRequest, StatsReply, StatsRequest,
                    TimerFire)
from .codec import DecodeError, encode, split_frames

logger = logging.getLogger(__name__)

DEDUP_WINDOW = 8192
PEER_QUEUE = 10000


class _Dedup:
    """Remembers the last few sequence numbers seen from each sender."""

    def __init__(self, window: int = DEDUP_WINDOW):
        self.window = window
        self.seen: dict = {}

    def fresh(self, src: str, seq: int) -> bool:
        entry = self.seen.get(src)
        if entry is None:
            entry = self.seen[src] = (set(), collections.deque())
        ids, order = entry
        if seq in ids:
            return False
        ids.add(seq)
        order.append(seq)
        if len(order) > self.window:
            ids.discard(order.popleft())
        return True


class _Peer:
    def __init__(self, host: "NodeHost", dst: str):
        self.host = host
        self.dst = dst
        self.queue: asyncio.Queue = asyncio.Queue(PEER_QUEUE)
        self.task = asyncio.get_running_loop().create_task(self._run())

    def send(self, frame: bytes) -> None:
        try:
            self.queue.put_nowait(frame)
        except asyncio.QueueFull:
            pass  # dropped, like any lost message

    async def _run(self) -> None:
        backoff = 0.02
        while True:
            addr = self.host.address_of(self.dst)
            if addr is None:
                await asyncio.sleep(0.2)
                continue
            try:
                _, writer = await asyncio.open_connection(*addr)
            except OSError:
                await asyncio.sleep(backoff)
                backoff = min(backoff * 2, 1.0)
                continue
            backoff = 0.02
            try:
                while True:
                    frame = await self.queue.get()
                    writer.write(frame)
                    if self.queue.empty():
                        await writer.drain()
            except (OSError, ConnectionError):
                logger.debug("%s: connection to %s lost", self.host.node_id, self.dst)
            finally:
                writer.close()

    def close(self) -> None:
        self.task.cancel()


class NodeHost:
    """Runs ``node``; ``view_file`` supplies peer addresses and view refreshes."""

    def __init__(self, node, view_file=None, listen=None, *, journal=None,
                 on_observe=None, clock=None, extra_delay=None, publish_view=False):
        self.node = node
        self.node_id = node.node_id
        self.view_file = view_file
        self.listen = listen
        self.journal = journal if journal is not None else getattr(node, "journal", None)
        self.on_observe = on_observe
        self._t0 = time.monotonic()
        self.clock = clock or (lambda: int((time.monotonic() - self._t0) * 1000))
        self.seq = time.time_ns() // 1000  # survives restarts without reuse
        self.dedup = _Dedup()
        self.peers: dict = {}
        self.timer_gen: dict = {}
        self.queue: asyncio.Queue | None = None
        self.server = None
        self.tasks: list = []
        self.delivered = 0
        self.outbound: list | None = None  # set to a list to capture sends
        # message class name -> milliseconds added before sending (fault injection)
        self.extra_delay = dict(extra_delay or {})
        self.publish_view = publish_view

    # -- addressing -------------------------------------------------------
    def address_of(self, nid: str):
        if self.view_file is None:
            return None
        return self.view_file.view.addresses.get(nid)

    # -- lifecycle --------------------------------------------------------
    async def start(self, recover: bool = True) -> None:
        self.queue = asyncio.Queue()
        if recover and self.journal is not None and len(self.journal):
            self.node.recover(list(self.journal))
        if self.listen is not None:
            self.server = await asyncio.start_server(self._accept, *self.listen)
        loop = asyncio.get_running_loop()
        self.tasks.append(loop.create_task(self._consume()))
        if self.view_file is not None:
            self.tasks.append(loop.create_task(self._watch_view()))
        self.node.now = self.clock()
        self.node.start()
        self._effects()

    async def stop(self) -> None:
        for t in self.tasks:
            t.cancel()
        for p in self.peers.values():
            p.close()
        if self.server is not None:
            self.server.close()
            await self.server.wait_closed()
        if hasattr(self.journal, "close"):
            self.journal.close()

    async def serve_forever(self) -> None:
        await self.start()
        try:
            await asyncio.Event().wait()
        finally:
            await self.stop()

    # -- inbound ----------------------------------------------------------
    async def _accept(self, reader, writer) -> None:
        buf = bytearray()
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                buf += data
                for env in split_frames(buf):
                    if isinstance(env.msg, (StateHashRequest, StatsRequest)):
                        # answered on this connection, in order with deliveries
                        fut = asyncio.get_running_loop().create_future()
                        self.queue.put_nowait(("probe", fut, env.msg))
                        reply = await fut
                        writer.write(encode(Envelope(self.node_id, env.src, 0, reply)))
                        await writer.drain()
                        continue
                    self.accept_envelope(env)
        except DecodeError as exc:
            logger.warning("%s: dropping connection after bad frame: %s", self.node_id, exc)
        except (OSError, ConnectionError):
            pass
        finally:
            writer.close()

    def accept_envelope(self, env: Envelope) -> bool:
        """Dedup and queue one decoded envelope. Returns False for duplicates."""
        if env.seq and not self.dedup.fresh(env.src, env.seq):
            return False
        self.queue.put_nowait(("msg", env.src, env.msg))
        return True

    async def _consume(self) -> None:
        while True:
            item = await self.queue.get()
            kind = item[0]
            if kind == "msg":
                self.deliver(item[1], item[2])
            elif kind == "timer":
                _, name, gen = item
                if self.timer_gen.get(name) == gen:
                    self.deliver_timer(name)
            elif kind == "probe":
                if isinstance(item[2], StatsRequest):
                    item[1].set_result(StatsReply(self.node_id, self.node.stats()))
                else:
                    item[1].set_result(StateHashReply(self.node_id, self.node.state_hash()))

    async def _watch_view(self) -> None:
        while True:
            await asyncio.sleep(0.5)
            self.view_file.refresh()

    # -- delivery (shared with the replay path) ---------------------------
    def deliver(self, src: str, msg, now: int | None = None) -> None:
        self.node.now = self.clock() if now is None else now
        self.delivered += 1
        if isinstance(msg, TimerFire):
            self.node.on_timer(msg.name)
        else:
            self.node.handle(src, msg)
        if isinstance(msg, Nack) and self.view_file is not None:
            self.view_file.refresh()
        self._effects()
        if self.publish_view and self.view_file is not None:
            vf = self.view_file
            if vf.view.version != vf.published_version:
                vf.publish()

    def deliver_timer(self, name: str, now: int | None = None) -> None:
        self.deliver(self.node_id, TimerFire(name), now)

    def _effects(self) -> None:
        if hasattr(self.journal, "flush"):
            self.journal.flush()
        out, timers, obs = self.node.drain()
        for dst, msg in out:
            self.send(dst, msg)
        for name, delay in timers:
            gen = self.timer_gen.get(name, 0) + 1
            self.timer_gen[name] = gen
            if delay is not None and self.queue is not None:
                asyncio.get_running_loop().call_later(
                    delay / 1000, self.queue.put_nowait, ("timer", name, gen))
        if obs and self.on_observe is not None:
            t = self.node.now
            for o in obs:
                self.on_observe((t, *o))

    def send(self, dst: str, msg) -> None:
        if self.outbound is not None:
            self.outbound.append((dst, msg))
            return
        if dst == self.node_id:
            if self.queue is not None:
                self.queue.put_nowait(("msg", dst, msg))
            return
        delay = self.extra_delay.get(type(msg).__name__) if self.extra_delay else None
        if delay:
            asyncio.get_running_loop().call_later(delay / 1000, self._transmit, dst, msg)
            return
        self._transmit(dst, msg)

    def _transmit(self, dst: str, msg) -> None:
        self.seq += 1
        frame = encode(Envelope(self.node_id, dst, self.seq, msg))
        peer = self.peers.get(dst)
        if peer is None:
            if self.address_of(dst) is None:
                return
            peer = self.peers[dst] = _Peer(self, dst)
        peer.send(frame)


# --------------------------------------------------------------------------
# Small client helpers for control and inspection
# --------------------------------------------------------------------------

async def send_message(addr, msg, src: str = "driver", dst: str = "") -> None:
    """Open a connection, send one frame, close."""
    _, writer = await asyncio.open_connection(*addr)
    writer.write(encode(Envelope(src, dst, time.time_ns(), msg)))
    await writer.drain()
    writer.close()


async def _probe(addr, request, timeout: float):
    reader, writer = await asyncio.open_connection(*addr)
    try:
        writer.write(encode(Envelope("probe", "", 0, request)))
        await writer.drain()
        buf = bytearray()
        while True:
            data = await asyncio.wait_for(reader.read(65536), timeout)
            if not data:
                raise ConnectionError("closed before reply")
            buf += data
            for env in split_frames(buf):
                return env.msg
    finally:
        writer.close()


async def query_state_hash(addr, timeout: float = 5.0) -> bytes:
    return (await _probe(addr, StateHashRequest(), timeout)).digest


async def query_stats(addr, timeout: float = 5.0) -> dict:
    return (await _probe(addr, StatsRequest(), timeout)).stats
