"""Replaying recorded inputs through the network host's delivery path.

The simulator can record, per node, every input it delivered (messages and
timer expiries). ``replay_node`` rebuilds the node from the same factory and
pushes each input through wire encoding, frame splitting, duplicate
filtering and ``NodeHost.deliver``; the resulting state hash must equal the
one the simulator-hosted node ended with.

Nodes share a ``ClusterView`` object. Each recorded input carries the view
version the node saw, and the replay installs that version before
delivering, the way a networked host picks up a newer view file.
"""
from __future__ import annotations

from ..core import Envelope
from ..node import MemoryJournal
from .codec import encode, split_frames
from .host import NodeHost


def _install(view, snapshot) -> None:
    for k, v in vars(snapshot.copy()).items():
        setattr(view, k, v)


def replay_node(factory, inputs, views=None, view=None, initial=None) -> bytes:
    """Run ``inputs`` [(t, src, msg, view version)] into a fresh node built
    by ``factory``; returns its state hash. ``view`` is the shared view
    object the factory hands to the node, reset from ``views`` as needed."""
    if view is not None and initial is not None:
        _install(view, views[initial])
    node = factory(MemoryJournal())
    host = NodeHost(node)
    host.outbound = []  # sends are captured, not transmitted
    node.now = 0
    node.start()
    host._effects()
    buf = bytearray()
    for seq, (t, src, msg, version) in enumerate(inputs, start=1):
        if view is not None and version is not None and view.version != version:
            _install(view, views[version])
        buf += encode(Envelope(src, node.node_id, seq, msg))
        for env in split_frames(buf):
            if host.dedup.fresh(env.src, env.seq):
                host.deliver(env.src, env.msg, now=t)
        host.outbound.clear()
    return node.state_hash()


def compare_with_simulator(sim) -> dict:
    """Replay every node of a finished simulation (run with
    ``record_inputs=True``). Returns {node: (sim hash, replay hash)} for
    the nodes whose hashes differ; empty means equivalent."""
    if sim.inputs is None:
        raise ValueError("simulation was not recording inputs")
    diffs = {}
    final = {}
    for nid, node in sim.nodes.items():
        view = getattr(node, "view", None)
        if view is not None:
            final.setdefault(id(view), (view, view.copy()))
    try:
        for nid, node in sorted(sim.nodes.items()):
            if sim.incarnation[nid] != 1:
                raise ValueError(f"{nid} was restarted; replay needs a crash-free run")
            expected = node.state_hash()
            got = replay_node(sim.factories[nid], sim.inputs[nid], sim.views,
                              getattr(node, "view", None), sim.initial_view.get(nid))
            if got != expected:
                diffs[nid] = (expected.hex(), got.hex())
    finally:
        for view, snapshot in final.values():
            _install(view, snapshot)
    return diffs
