"""Deterministic discrete-event simulator.

Virtual time is an integer. Every random choice (delays, drops, duplicates)
comes from one seeded ``random.Random``, and ties in the event heap are
broken by insertion order, so a (seed, plan, topology, workload) tuple always
produces the same trace.
"""
from __future__ import annotations

import hashlib
import heapq
import logging
import random
from dataclasses import dataclass, field

from ..core import TimerFire
from ..node import MemoryJournal

logger = logging.getLogger(__name__)

_MSG, _TIMER, _ACTION = 0, 1, 2


@dataclass
class FaultPlan:
    drop: float = 0.0
    duplicate: float = 0.0
    delay: tuple = (1, 1)
    # message class name -> extra delay added on top of the sampled latency
    extra_delay: dict = field(default_factory=dict)
    # (start, end, groups): during [start, end) only nodes in the same group talk
    partitions: list = field(default_factory=list)
    # (start, end, a, b): during [start, end) the link between a and b is down
    cuts: list = field(default_factory=list)
    crashes: list = field(default_factory=list)  # (time, node)
    restarts: list = field(default_factory=list)  # (time, node)


class Simulator:
    def __init__(self, seed: int = 0, plan: FaultPlan | None = None, *, dedup: bool = True,
                 record_inputs: bool = False, record_trace: bool = False):
        self.seed = seed
        self.rng = random.Random(seed)
        self.plan = plan or FaultPlan()
        self.dedup = dedup
        self.now = 0
        self.nodes: dict = {}
        self.factories: dict = {}
        self.journals: dict = {}
        self.incarnation: dict = {}
        self.timer_gen: dict = {}
        self.send_seq: dict = {}
        self.seen: dict = {}
        self.observations: list = []
        self.events = 0
        self.inputs: dict = {} if record_inputs else None
        self.views: dict = {}  # view version -> snapshot, filled while recording inputs
        self.initial_view: dict = {}  # node -> view version at creation
        self.trace: list | None = [] if record_trace else None
        self._heap: list = []
        self._seq = 0
        self._digest = hashlib.blake2b(digest_size=16)
        self._partition_groups = None
        self._cut: set = set()
        for t, node in self.plan.crashes:
            self.at(t, lambda n=node: self.crash(n))
        for t, node in self.plan.restarts:
            self.at(t, lambda n=node: self.restart(n))
        for start, end, groups in self.plan.partitions:
            self.at(start, lambda g=groups: self._set_partition(g))
            self.at(end, lambda: self._set_partition(None))
        for start, end, a, b in self.plan.cuts:
            link = frozenset((a, b))
            self.at(start, lambda k=link: self._cut.add(k))
            self.at(end, lambda k=link: self._cut.discard(k))

    # -- topology ---------------------------------------------------------
    def add(self, factory, start: bool = True):
        """Create a node from ``factory(journal)`` and register it."""
        journal = MemoryJournal()
        node = factory(journal)
        nid = node.node_id
        self.factories[nid] = factory
        self.journals[nid] = journal
        self.nodes[nid] = node
        self.incarnation[nid] = self.incarnation.get(nid, 0) + 1
        if self.inputs is not None:
            self.inputs.setdefault(nid, [])
            self.initial_view.setdefault(nid, self._view_version(node))
        if start:
            node.now = self.now
            node.start()
            self._effects(node)
        return node

    def crash(self, nid: str) -> None:
        if nid in self.nodes:
            del self.nodes[nid]
            self.incarnation[nid] += 1
            self._observe(("crash", nid))
            logger.debug("t=%s crash %s", self.now, nid)

    def restart(self, nid: str) -> None:
        if nid in self.nodes or nid not in self.factories:
            return
        journal = self.journals[nid]
        node = self.factories[nid](journal)
        node.now = self.now
        node.recover(list(journal))
        self.nodes[nid] = node
        self.incarnation[nid] += 1
        self._observe(("restart", nid))
        node.start()
        self._effects(node)

    def _set_partition(self, groups) -> None:
        if groups is None:
            self._partition_groups = None
        else:
            self._partition_groups = {n: i for i, g in enumerate(groups) for n in g}

    # -- scheduling -------------------------------------------------------
    def at(self, t: int, fn) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, _ACTION, fn))

    def inject(self, t: int, dst: str, msg, src: str = "driver") -> None:
        """Deliver ``msg`` to ``dst`` at time ``t`` without faults."""
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, _MSG, (src, dst, msg, 0)))

    def _effects(self, node) -> None:
        out, timers, obs = node.drain()
        nid = node.node_id
        for dst, msg in out:
            self._send(nid, dst, msg)
        if timers:
            inc = self.incarnation[nid]
            for name, delay in timers:
                key = (nid, name)
                gen = self.timer_gen.get(key, 0) + 1
                self.timer_gen[key] = gen
                if delay is not None:
                    self._seq += 1
                    heapq.heappush(self._heap, (self.now + int(delay), self._seq, _TIMER,
                                                (nid, name, gen, inc)))
        if obs:
            t = self.now
            for o in obs:
                self.observations.append((t, *o))

    def _observe(self, obs) -> None:
        self.observations.append((self.now, *obs))

    def _send(self, src: str, dst: str, msg) -> None:
        plan = self.plan
        rng = self.rng
        seq = self.send_seq.get(src, 0) + 1
        self.send_seq[src] = seq
        if src == dst:
            copies = 1
        else:
            groups = self._partition_groups
            if groups is not None and groups.get(src, -1) != groups.get(dst, -1):
                return
            if self._cut and frozenset((src, dst)) in self._cut:
                return
            if plan.drop and rng.random() < plan.drop:
                return
            copies = 2 if plan.duplicate and rng.random() < plan.duplicate else 1
        lo, hi = plan.delay
        extra = plan.extra_delay.get(type(msg).__name__, 0) if plan.extra_delay else 0
        tag = (src, self.incarnation.get(src, 0), seq)
        for _ in range(copies):
            d = lo if lo == hi else rng.randint(lo, hi)
            self._seq += 1
            heapq.heappush(self._heap, (self.now + d + extra, self._seq, _MSG,
                                        (src, dst, msg, tag)))

    # -- running ----------------------------------------------------------
    def run(self, until: int) -> None:
        heap = self._heap
        nodes = self.nodes
        while heap and heap[0][0] <= until:
            t, _, kind, payload = heapq.heappop(heap)
            self.now = t
            if kind == _MSG:
                src, dst, msg, tag = payload
                node = nodes.get(dst)
                if node is None:
                    continue
                if self.dedup and tag:
                    seen = self.seen.get(dst)
                    if seen is None:
                        seen = self.seen[dst] = set()
                    if tag in seen:
                        continue
                    seen.add(tag)
                self._deliver(node, src, msg)
            elif kind == _TIMER:
                nid, name, gen, inc = payload
                node = nodes.get(nid)
                if node is None or self.incarnation[nid] != inc \
                        or self.timer_gen.get((nid, name)) != gen:
                    continue
                if self.inputs is not None:
                    self.inputs[nid].append((t, nid, TimerFire(name), self._view_version(node)))
                self.events += 1
                node.now = t
                node.on_timer(name)
                self._digest.update(f"{t}|{nid}|timer:{name}".encode())
                self._effects(node)
            else:
                payload()
        if self.now < until:
            self.now = until

    def _view_version(self, node):
        view = getattr(node, "view", None)
        if view is None:
            return None
        if view.version not in self.views:
            self.views[view.version] = view.copy()
        return view.version

    def _deliver(self, node, src, msg) -> None:
        t = self.now
        if self.inputs is not None:
            self.inputs[node.node_id].append((t, src, msg, self._view_version(node)))
        self.events += 1
        node.now = t
        node.handle(src, msg)
        self._digest.update(f"{t}|{src}|{node.node_id}|{type(msg).__name__}".encode())
        if self.trace is not None:
            self.trace.append((t, node.node_id, type(msg).__name__,
                               node.state_hash().hex()[:16]))
        self._effects(node)

    # -- inspection -------------------------------------------------------
    def trace_hash(self) -> str:
        d = self._digest.copy()
        for nid in sorted(self.nodes):
            d.update(nid.encode())
            d.update(self.nodes[nid].state_hash())
        return d.hexdigest()

    def state_hashes(self) -> dict:
        return {nid: n.state_hash().hex() for nid, n in sorted(self.nodes.items())}

    def dump_trace(self, path) -> None:
        """Write the per-delivery trace as tab-separated lines."""
        with open(path, "w") as f:
            for t, node, event, digest in self.trace or ():
                f.write(f"{t}\t{node}\t{event}\t{digest}\n")
