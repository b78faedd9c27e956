"""Cluster topologies and the randomized schedule corpus."""
from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass, field, fields, replace

from ..client import ClientNode
from ..core import BecomeLeader, Reconfigure, ReconfigureMatchmakers
from ..discovery import ClusterView
from ..leader import LEADER, LeaderNode, LeaderOptions
from ..mmreconfig import ReconfigDriverNode
from ..replica import APPS, ReplicaNode
from . import mutants
from .oracle import check_safety
from .sim import FaultPlan, Simulator

logger = logging.getLogger(__name__)


@dataclass
class ClusterSpec:
    f: int = 1
    leaders: int = 2
    clients: int = 2
    options: LeaderOptions = field(default_factory=LeaderOptions)
    app: str = "noop"
    client_timeout: int = 40
    client_stagger: int = 0
    replica_ack_delay: int = 0
    mutant: str | None = None

    @property
    def group(self) -> int:
        return 2 * self.f + 1


class Cluster:
    """A Matchmaker MultiPaxos deployment inside one simulator.

    Acceptors and matchmakers come from pools of 2(2f+1) nodes; the first
    2f+1 of each pool start out in use.
    """

    def __init__(self, sim: Simulator, spec: ClusterSpec, seed: int = 0):
        self.sim = sim
        self.spec = spec
        n = spec.group
        self.leader_ids = tuple(f"l{i + 1}" for i in range(spec.leaders))
        self.acceptor_ids = tuple(f"a{i + 1}" for i in range(2 * n))
        self.matchmaker_ids = tuple(f"m{i + 1}" for i in range(2 * n))
        self.replica_ids = tuple(f"r{i + 1}" for i in range(n))
        self.client_ids = tuple(f"c{i + 1}" for i in range(spec.clients))
        self.driver_id = "d1"
        self.view = ClusterView(matchmaker_epoch=0, matchmakers=self.matchmaker_ids[:n],
                                acceptors=self.acceptor_ids, replicas=self.replica_ids,
                                leaders=self.leader_ids)
        view, opts, mutant = self.view, spec.options, spec.mutant
        if not mutants.guard_gc(mutant):
            opts = replace(opts, guard_gc=False)
        initial = self.acceptor_ids[:n]
        acc_cls = mutants.acceptor_class(mutant)
        mm_cls = mutants.matchmaker_class(mutant)
        for a in self.acceptor_ids:
            sim.add(lambda j, a=a: acc_cls(a, j))
        for i, m in enumerate(self.matchmaker_ids):
            epochs = (0,) if i < n else ()
            sim.add(lambda j, m=m, e=epochs: mm_cls(m, j, epochs=e))
        app = APPS[spec.app]
        for r in self.replica_ids:
            sim.add(lambda j, r=r: ReplicaNode(r, view, journal=j, app=app(),
                                               ack_delay=spec.replica_ack_delay))
        for p in self.leader_ids:
            sim.add(lambda j, p=p: LeaderNode(p, view, initial, journal=j, options=opts,
                                              seed=seed))
        sim.add(lambda j: ReconfigDriverNode(self.driver_id, view, journal=j, seed=seed))
        for i, c in enumerate(self.client_ids):
            sim.add(lambda j, c=c, i=i: ClientNode(c, view, timeout=spec.client_timeout,
                                                   start_at=sim.now + i * spec.client_stagger))

    # -- control events ---------------------------------------------------
    def elect(self, t: int, leader: str | None = None) -> None:
        self.sim.inject(t, leader or self.leader_ids[0], BecomeLeader())

    def reconfigure(self, t: int, acceptors) -> None:
        msg = Reconfigure(tuple(sorted(acceptors)))
        for p in self.leader_ids:
            self.sim.inject(t, p, msg)

    def reconfigure_matchmakers(self, t: int, members) -> None:
        self.sim.inject(t, self.driver_id, ReconfigureMatchmakers(tuple(sorted(members))))

    # -- inspection -------------------------------------------------------
    def leader(self):
        best = None
        for p in self.leader_ids:
            node = self.sim.nodes.get(p)
            if node is not None and node.status == LEADER:
                if best is None or node.round > best.round:
                    best = node
        return best

    def clients(self):
        return [self.sim.nodes[c] for c in self.client_ids if c in self.sim.nodes]

    def completed(self) -> int:
        return sum(len(c.latencies) for c in self.clients())


# --------------------------------------------------------------------------
# Randomized corpus
# --------------------------------------------------------------------------

@dataclass
class Schedule:
    seed: int
    duration: int = 300
    drop: float = 0.0
    duplicate: float = 0.0
    delay_hi: int = 1
    dedup: bool = True
    clients: int = 2
    proactive: bool = True
    bypass: bool = True
    gc: bool = True
    thrifty: bool = False
    reconfig_every: int = 50
    reconfigs: list = field(default_factory=list)  # (t, acceptors)
    mm_reconfigs: list = field(default_factory=list)  # (t, members)
    elections: list = field(default_factory=list)  # (t, leader)
    crashes: list = field(default_factory=list)  # (t, node)
    restarts: list = field(default_factory=list)  # (t, node)
    partitions: list = field(default_factory=list)  # (start, end, groups)
    cuts: list = field(default_factory=list)  # (start, end, a, b)

    def dumps(self) -> str:
        """Human-readable ``key = value`` form (values are JSON)."""
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def loads(cls, text: str) -> "Schedule":
        kinds = {f.name for f in fields(cls)}
        values = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in kinds:
                raise ValueError(f"unknown schedule key {key!r}")
            values[key] = json.loads(raw)
        sched = cls(**values)
        # JSON turns tuples into lists; normalise the nested ones
        sched.reconfigs = [(t, tuple(a)) for t, a in sched.reconfigs]
        sched.mm_reconfigs = [(t, tuple(m)) for t, m in sched.mm_reconfigs]
        sched.elections = [tuple(e) for e in sched.elections]
        sched.crashes = [tuple(c) for c in sched.crashes]
        sched.restarts = [tuple(r) for r in sched.restarts]
        sched.partitions = [(s, e, [tuple(g) for g in gs]) for s, e, gs in sched.partitions]
        sched.cuts = [tuple(c) for c in sched.cuts]
        return sched


def corpus_schedule(seed: int, f: int = 1, duration: int = 300) -> Schedule:
    """Draw one schedule of the standard fault matrix from ``seed``."""
    rng = random.Random(seed)
    n = 2 * f + 1
    acceptors = [f"a{i + 1}" for i in range(2 * n)]
    matchmakers = [f"m{i + 1}" for i in range(2 * n)]
    replicas = [f"r{i + 1}" for i in range(n)]
    s = Schedule(seed=seed, duration=duration)
    s.drop = rng.choice([0.0, 0.05, 0.1, 0.2, 0.3]) * (rng.random() < 0.8)
    s.duplicate = rng.choice([0.0, 0.05, 0.2])
    s.delay_hi = rng.choice([1, 2, 3, 5, 8])
    s.dedup = rng.random() < 0.5
    s.clients = rng.choice([1, 2, 3])
    s.proactive = rng.random() < 0.8
    s.bypass = rng.random() < 0.8
    s.gc = rng.random() < 0.9
    s.thrifty = rng.random() < 0.3

    t = 30
    while t < duration - 20:
        s.reconfigs.append((t, tuple(sorted(rng.sample(acceptors, n)))))
        t += s.reconfig_every
    current = matchmakers[:n]
    for _ in range(rng.choice([1, 1, 2])):
        t_mm = rng.randrange(40, duration - 60)
        pool = [m for m in matchmakers]
        new = sorted(rng.sample(pool, n)) if rng.random() < 0.7 else \
            sorted(m for m in matchmakers if m not in current)
        s.mm_reconfigs.append((t_mm, tuple(new)))
        current = new
    s.mm_reconfigs.sort()

    # at most one crash per role
    for role, pool in (("acceptor", acceptors[:n]), ("matchmaker", matchmakers[:n]),
                       ("replica", replicas), ("leader", ["l1"])):
        if rng.random() < 0.4:
            node = rng.choice(pool)
            tc = rng.randrange(20, duration - 40)
            s.crashes.append((tc, node))
            if rng.random() < 0.6:
                s.restarts.append((tc + rng.randrange(10, 60), node))
    # forced elections: at a random time, right after a reconfiguration, or
    # while the two leaders cannot hear each other (dueling leaders)
    kind = rng.choices(["none", "random", "after-reconfig", "duel"], [30, 20, 25, 25])[0]
    if kind == "random":
        s.elections.append((rng.randrange(20, duration - 30), "l2"))
    elif kind == "after-reconfig":
        base = rng.choice(s.reconfigs)[0]
        s.elections.append((base + rng.randrange(0, 8), "l2"))
    elif kind == "duel":
        start = rng.randrange(10, duration - 100)
        s.cuts.append((start, start + rng.randrange(40, 150), "l1", "l2"))
        s.elections.append((start + rng.randrange(0, 20), "l2"))
        if rng.random() < 0.3:
            s.elections.append((start + rng.randrange(20, 60), "l1"))
    if rng.random() < 0.15:
        start = rng.randrange(20, duration - 60)
        cut = rng.sample(acceptors + replicas + ["l1", "l2"], 3)
        s.partitions.append((start, start + rng.randrange(10, 50), [tuple(cut)]))
    return s


@dataclass
class RunResult:
    schedule: Schedule
    report: object
    completed: int
    events: int
    trace_hash: str
    sim: Simulator = None
    cluster: Cluster = None


def build(schedule: Schedule, mutant: str | None = None, *, record_inputs=False,
          record_trace=False):
    s = schedule
    # nodes outside every listed group share one implicit group
    plan = FaultPlan(drop=s.drop, duplicate=s.duplicate, delay=(1, s.delay_hi),
                     partitions=[(a, b, [tuple(g) for g in gs]) for a, b, gs in s.partitions],
                     cuts=list(s.cuts), crashes=list(s.crashes), restarts=list(s.restarts))
    sim = Simulator(s.seed, plan, dedup=s.dedup, record_inputs=record_inputs,
                    record_trace=record_trace)
    opts = LeaderOptions(proactive=s.proactive, bypass=s.bypass, gc=s.gc, thrifty=s.thrifty,
                         resend_after=20, phase_timeout=60)
    spec = ClusterSpec(clients=s.clients, options=opts, mutant=mutant, client_timeout=40,
                       client_stagger=1)
    cluster = Cluster(sim, spec, seed=s.seed)
    cluster.elect(0)
    for t, acc in s.reconfigs:
        cluster.reconfigure(t, acc)
    for t, members in s.mm_reconfigs:
        cluster.reconfigure_matchmakers(t, members)
    for t, leader in s.elections:
        cluster.elect(t, leader)
    return sim, cluster


def run_schedule(schedule: Schedule, mutant: str | None = None, keep=False,
                 record_trace=False) -> RunResult:
    sim, cluster = build(schedule, mutant, record_trace=record_trace)
    sim.run(schedule.duration)
    report = check_safety(sim.observations)
    result = RunResult(schedule, report, cluster.completed(), sim.events, sim.trace_hash())
    if keep:
        result.sim, result.cluster = sim, cluster
    return result


def run_corpus(seeds, mutant: str | None = None, stop_on_violation: bool = False,
               duration: int = 300):
    """Run the corpus; returns (results of failing runs, runs executed)."""
    failures = []
    count = 0
    for seed in seeds:
        count += 1
        result = run_schedule(corpus_schedule(seed, duration=duration), mutant)
        if not result.report.ok:
            failures.append(result)
            if stop_on_violation:
                break
    return failures, count
