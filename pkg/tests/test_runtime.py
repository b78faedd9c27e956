import asyncio
import dataclasses
import time

import pytest

from mmpaxos.core import BecomeLeader, Envelope, Phase2B, Round
from mmpaxos.discovery import ClusterView
from mmpaxos.runtime.codec import encode
from mmpaxos.runtime.host import NodeHost, query_state_hash, query_stats
from mmpaxos.runtime.journal import FileJournal
from mmpaxos.runtime.launch import LocalCluster, parse_extra_delay, parse_opts
from mmpaxos.runtime.replay import compare_with_simulator
from mmpaxos.runtime.view import StaleViewError, ViewFile, load_view, loads_view, dumps_view, save_view
from mmpaxos.simnet.scenarios import build, corpus_schedule
from mmpaxos.acceptor import AcceptorNode
from mmpaxos.client import ClientNode


def _view(version=1):
    return ClusterView(version=version, matchmakers=("m1", "m2", "m3"),
                       acceptors=("a1", "a2", "a3"), replicas=("r1",), leaders=("l1",),
                       addresses={"l1": ("127.0.0.1", 7001), "a1": ("127.0.0.1", 7002)})


def test_view_text_roundtrip():
    v = _view(4)
    assert loads_view(dumps_view(v)) == v


def test_view_version_is_monotone(tmp_path):
    path = tmp_path / "view.ini"
    save_view(_view(3), path)
    with pytest.raises(StaleViewError):
        save_view(_view(2), path)
    vf = ViewFile(path)
    newer = _view(5)
    newer.leaders = ("l2",)
    time.sleep(0.01)
    save_view(newer, path)
    assert vf.refresh(force=True) and vf.view.leaders == ("l2",)
    assert load_view(path).version == 5


def test_file_journal_roundtrip_and_torn_tail(tmp_path):
    path = tmp_path / "a1.journal"
    j = FileJournal(path)
    j.append(("promise", Round(1, "l1", 0)))
    j.append(("vote", 0, Round(1, "l1", 0)))
    j.close()
    with open(path, "ab") as f:
        f.write(b"\x00\x00\x00\x09abc")  # torn write
    again = FileJournal(path)
    assert list(again) == [("promise", Round(1, "l1", 0)), ("vote", 0, Round(1, "l1", 0))]
    again.close()


def test_batched_journal_writes_on_flush(tmp_path):
    j = FileJournal(tmp_path / "r1.journal", fsync=False)
    j.append(("exec", 0))
    assert (tmp_path / "r1.journal").read_bytes() == b""
    j.flush()
    assert len(FileJournal(tmp_path / "r1.journal")) == 1


def test_option_and_delay_flags():
    o = parse_opts("gc,bypass")
    assert o.gc and o.bypass and not o.proactive
    assert parse_extra_delay("Phase1B=250, MatchB=10") == {"Phase1B": 250, "MatchB": 10}
    with pytest.raises(ValueError):
        parse_opts("turbo")


def test_host_drops_duplicate_frames():
    async def go():
        host = NodeHost(AcceptorNode("a1"))
        await host.start()
        env = Envelope("l1", "a1", 11, Phase2B(Round(0, "l1", 0), 0))
        assert host.accept_envelope(env)
        assert not host.accept_envelope(env)
        assert host.accept_envelope(dataclasses.replace(env, seq=12))
        await host.stop()
    asyncio.run(go())


def test_replay_matches_simulator_for_every_role():
    sched = dataclasses.replace(corpus_schedule(11), crashes=[], restarts=[])
    sim, _ = build(sched, record_inputs=True)
    sim.run(sched.duration)
    assert {n[0] for n in sim.nodes} >= {"a", "m", "l", "r", "c", "d"}
    assert compare_with_simulator(sim) == {}


def test_loopback_cluster(tmp_path):
    """Commands flow over TCP; survive an acceptor kill; a stale client is redirected."""

    async def go(cluster):
        vf = ViewFile(cluster.view_path)
        view = vf.view
        await cluster.control("l2", BecomeLeader())
        t0 = time.monotonic()
        clock = lambda: int((time.monotonic() - t0) * 1000)
        client = ClientNode("c1", view, timeout=1000)
        assert client.leader == "l1"
        host = NodeHost(client, vf, view.addresses["c1"], clock=clock)
        await host.start()

        async def wait_for(n, timeout=20.0):
            deadline = time.monotonic() + timeout
            while len(client.latencies) < n:
                assert time.monotonic() < deadline, f"{len(client.latencies)} of {n}"
                await asyncio.sleep(0.05)

        await wait_for(20)
        assert client.leader == "l2"
        cluster.kill("a1")
        done = len(client.latencies)
        await wait_for(done + 20)
        stats = await query_stats(view.addresses["l2"])
        assert stats["leader"] and stats["next_slot"] >= done + 20
        digest = await query_state_hash(view.addresses["r1"])
        assert len(digest) > 0
        await host.stop()

    with LocalCluster(tmp_path, leaders=2, clients=1) as cluster:
        cluster.start()
        asyncio.run(go(cluster))
