from mmpaxos.core import Round
from mmpaxos.election import ELECT, HEARTBEAT, ElectionState
from mmpaxos.simnet.scenarios import Cluster, ClusterSpec
from mmpaxos.simnet.sim import FaultPlan, Simulator
from mmpaxos.leader import LEADER


def test_leader_heartbeats_and_followers_wait():
    leader = ElectionState("l2", heartbeat=10)
    leader.became_leader(Round(1, "l2", 0), 0)
    follower = ElectionState("l1", heartbeat=10)
    follower.deadline = 50
    for now in range(0, 500, 10):
        if leader.tick(now) == HEARTBEAT:
            follower.observe(Round(1, "l2", 0), now)
        assert follower.tick(now) is None


def test_deadline_lapse_elects_next_counter():
    e = ElectionState("l1", heartbeat=10)
    e.observe(Round(3, "l2", 4), 0)
    assert e.tick(49) is None
    assert e.tick(50) == (ELECT, Round(4, "l1", 0))


def test_higher_round_steps_down():
    e = ElectionState("l1")
    e.became_leader(Round(1, "l1", 0), 0)
    assert e.observe(Round(1, "l2", 0), 5)
    assert not e.leading and e.leader == "l2"


def test_claims_only_own_rounds():
    e = ElectionState("l3")
    for r in [Round(0, "l1", 0), Round(5, "l2", 2)]:
        e.observe(r, 0)
        assert e.candidate_round().owner == "l3"


def _leaders(sim, cluster):
    return [p for p in cluster.leader_ids
            if p in sim.nodes and sim.nodes[p].status == LEADER]


def test_leader_crash_yields_single_stable_leader():
    for seed in range(10):
        sim = Simulator(seed, FaultPlan(delay=(1, 3), crashes=[(100, "l1")]))
        cluster = Cluster(sim, ClusterSpec(leaders=3, clients=1), seed=seed)
        cluster.elect(0)
        sim.run(600)
        assert _leaders(sim, cluster) == ["l3"], seed
        done = cluster.completed()
        sim.run(800)
        assert cluster.completed() > done


def test_simultaneous_candidates_higher_id_wins():
    sim = Simulator(1, FaultPlan(delay=(1, 2)))
    cluster = Cluster(sim, ClusterSpec(leaders=2, clients=1), seed=1)
    cluster.elect(0, "l1")
    cluster.elect(0, "l2")
    sim.run(300)
    assert _leaders(sim, cluster) == ["l2"]
