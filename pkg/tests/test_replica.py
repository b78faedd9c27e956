import pytest

from mmpaxos.core import NOOP, Chosen, ClientReply, PrefixPersisted, command
from mmpaxos.discovery import ClusterView
from mmpaxos.node import ConsistencyError
from mmpaxos.replica import KVApp, ReplicaNode, ReplicaState

from conftest import feed

a, b, c = (command(p, "c1", i) for i, p in enumerate([b"a", b"b", b"c"], start=1))


def test_prefix_order_execution():
    r = ReplicaState()
    r.insert(0, a)
    r.execute()
    r.insert(2, c)
    assert r.execute() == []
    r.insert(1, b)
    r.execute()
    assert [v for _, v in r.executed] == [a, b, c]
    assert r.exec_watermark == 2


def test_noop_advances_without_executing():
    r = ReplicaState()
    r.insert(0, NOOP)
    r.execute()
    assert r.exec_watermark == 0 and r.executed == []


def test_duplicate_chosen_not_reexecuted():
    r = ReplicaState()
    assert r.insert(0, a)
    r.execute()
    assert not r.insert(0, a)
    assert r.execute() == [] and len(r.executed) == 1


def test_conflicting_value_is_fatal():
    r = ReplicaState()
    r.insert(0, a)
    with pytest.raises(ConsistencyError):
        r.insert(0, b)


def test_watermark_examples():
    r = ReplicaState()
    assert r.snapshot_watermark() == -1
    for s, v in enumerate([a, b, c]):
        r.insert(s, v)
    r.execute()
    assert r.snapshot_watermark() == 2
    gap = ReplicaState()
    gap.insert(0, a)
    gap.insert(2, c)
    gap.execute()
    assert gap.snapshot_watermark() == 0


def test_client_table_at_most_once():
    r = ReplicaState(KVApp())
    r.insert(0, command(b"set k 1", "c1", 1))
    r.insert(1, command(b"set k 1", "c1", 1))
    r.execute()
    assert len(r.executed) == 1


def _view():
    return ClusterView(replicas=("r1", "r2", "r3"), leaders=("l1",))


def test_designated_replica_replies_and_acks():
    nodes = {rid: ReplicaNode(rid, _view()) for rid in ("r1", "r2", "r3")}
    replies = []
    for rid, node in nodes.items():
        for slot, v in enumerate([a, b, c]):
            out = feed(node, "l1", Chosen(slot, v))
            replies += [(rid, m) for d, m in out if isinstance(m, ClientReply)]
            assert ("l1", PrefixPersisted(slot)) in out
    assert sorted((rid, m.seq) for rid, m in replies) == [("r1", 1), ("r2", 2), ("r3", 3)]


def test_restart_preserves_watermark():
    node = ReplicaNode("r1", _view())
    for slot, v in enumerate([a, b]):
        feed(node, "l1", Chosen(slot, v))
    again = ReplicaNode("r1", _view())
    again.recover(list(node.journal))
    assert again.r.exec_watermark == 1 and again.state() == node.state()
