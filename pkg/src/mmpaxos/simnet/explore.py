"""Exhaustive exploration of small single-decree deployments.

The network is modelled as a set of sent messages that never shrinks: any
sent message may be delivered at any later point, any number of times, or
never. That covers reordering, duplication and loss at once. Depth counts
deliveries that change something (a node's state, the message set or the
observations); deliveries that change nothing are pruned. Global states are
deduplicated by hash, and every reached state is checked with the oracle.
"""
from __future__ import annotations

import hashlib
import logging
import pickle
from dataclasses import dataclass, field

from ..acceptor import AcceptorNode, FastAcceptorNode
from ..client import FastClientNode
from ..matchmaker import MatchmakerNode
from ..core import (Propose, command, fast_configuration, majority_configuration)
from ..discovery import ClusterView
from ..proposer import ProposerNode, ProposerOptions
from . import mutants
from .oracle import check_safety

logger = logging.getLogger(__name__)


@dataclass
class Topology:
    """Nodes plus the messages present before anything is delivered."""

    name: str
    nodes: list  # node objects, fresh
    initial: list = field(default_factory=list)  # (src, dst, msg)


@dataclass
class ExploreResult:
    ok: bool
    states: int
    depth: int
    partial: bool = False
    violations: list = field(default_factory=list)
    counterexample: list = field(default_factory=list)  # [(src, dst, msg)]

    def __bool__(self) -> bool:
        return self.ok


def matchmaker_topology(mutant: str | None = None) -> Topology:
    """Two proposers with disjoint three-acceptor configurations, three matchmakers."""
    matchmakers = ("m1", "m2", "m3")
    view = ClusterView(matchmaker_epoch=0, matchmakers=matchmakers)
    ca = majority_configuration("Ca", ("a1", "a2", "a3"))
    cb = majority_configuration("Cb", ("b1", "b2", "b3"))
    acc_cls = mutants.acceptor_class(mutant)
    mm_cls = mutants.matchmaker_class(mutant)
    options = ProposerOptions(guard_gc=mutants.guard_gc(mutant))
    nodes = [ProposerNode("p1", view, ca, options=options),
             ProposerNode("p2", view, cb, options=options)]
    nodes += [acc_cls(a) for a in sorted(ca.acceptors | cb.acceptors)]
    nodes += [mm_cls(m, epochs=(0,)) for m in matchmakers]
    initial = [("env", "p1", Propose(command(b"x"))), ("env", "p2", Propose(command(b"y")))]
    return Topology("matchmaker", nodes, initial)


def fast_topology() -> Topology:
    """Fast Paxos with f=1: two acceptors, two clients, two proposers."""
    matchmakers = ("m1", "m2", "m3")
    view = ClusterView(matchmaker_epoch=0, matchmakers=matchmakers)
    config = fast_configuration("F", ("f1", "f2"))
    options = ProposerOptions(fast=True, gc=False)
    nodes = [ProposerNode("p1", view, config, options=options),
             ProposerNode("p2", view, config, options=options)]
    nodes += [FastAcceptorNode(a) for a in ("f1", "f2")]
    nodes += [MatchmakerNode(m, epochs=(0,)) for m in matchmakers]
    nodes += [FastClientNode("x", ("f1", "f2"), command(b"x")),
              FastClientNode("y", ("f1", "f2"), command(b"y"))]
    initial = [("env", "p1", Propose(None)), ("env", "p2", Propose(None))]
    return Topology("fast", nodes, initial)


def _key(blobs, messages, observations):
    nodes = hashlib.blake2b(b"".join(blobs[nid] for nid in sorted(blobs)),
                            digest_size=16).digest()
    return nodes, hash(messages), len(messages), hash(observations), len(observations)


def explore_exhaustive(topology: Topology, depth: int = 10,
                       max_states: int = 2_000_000) -> ExploreResult:
    """Breadth-first search over delivery orders up to ``depth``.

    Returns the first counterexample found, or ok. When ``max_states``
    distinct states are reached the search stops and the result is flagged
    partial.
    """
    messages = set(topology.initial)
    observations = set()
    blobs = {}
    for node in topology.nodes:
        if isinstance(node, ProposerNode) and not node.retries:
            node.rng = None  # unused without retries; keeps snapshots small
        node.start()
        out, _, obs = node.drain()
        messages.update((node.node_id, dst, msg) for dst, msg in out)
        observations.update((0, *o) for o in obs)
        blobs[node.node_id] = pickle.dumps(node)

    start = (blobs, frozenset(messages), frozenset(observations), ())

    messages, observations = frozenset(messages), frozenset(observations)
    seen = {_key(blobs, messages, observations)}
    frontier = [start]
    states = 1
    report = check_safety(observations)
    if not report.ok:
        return ExploreResult(False, states, 0, violations=report.violations)
    for level in range(1, depth + 1):
        nxt = []
        for blobs, msgs, obs, trace in frontier:
            for delivery in sorted(msgs, key=repr):
                src, dst, msg = delivery
                blob = blobs.get(dst)
                if blob is None:
                    continue
                node = pickle.loads(blob)
                node.handle(src, msg)
                out, _, new_obs = node.drain()
                new_blob = pickle.dumps(node)
                added = {(dst, d, m) for d, m in out} - msgs
                added_obs = {(0, *o) for o in new_obs} - obs
                if new_blob == blob and not added and not added_obs:
                    continue
                nb = dict(blobs)
                nb[dst] = new_blob
                nm = msgs | added if added else msgs
                no = obs | added_obs if added_obs else obs
                key = _key(nb, nm, no)
                if key in seen:
                    continue
                seen.add(key)
                states += 1
                path = trace + (delivery,)
                if added_obs:
                    report = check_safety(no)
                    if not report.ok:
                        return ExploreResult(False, states, level, violations=report.violations,
                                             counterexample=list(path))
                if states >= max_states:
                    return ExploreResult(True, states, level - 1, partial=True)
                nxt.append((nb, nm, no, path))
        logger.info("%s depth %d: %d new states (%d total)", topology.name, level, len(nxt),
                    states)
        if not nxt:
            return ExploreResult(True, states, level - 1)
        frontier = nxt
    return ExploreResult(True, states, depth)
