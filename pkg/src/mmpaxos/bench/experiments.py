"""Experiment scripts and the simulator runner.

All times are milliseconds. In the simulator one virtual time unit is one
millisecond, so the same experiment description runs on both targets.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace

from ..core import BecomeLeader, Reconfigure, ReconfigureMatchmakers
from ..leader import LeaderOptions
from ..simnet.scenarios import Cluster, ClusterSpec
from ..simnet.sim import FaultPlan, Simulator
from .metrics import summarize, windows

logger = logging.getLogger(__name__)

SIM_LEADER_OPTIONS = LeaderOptions(heartbeat=100, deadline_factor=5, auto_elect=False,
                                   resend_after=300, phase_timeout=1000)
OPT_SETS = {
    "none": "",
    "gc": "gc",
    "gc+bypass": "gc,bypass",
    "all": "proactive,bypass,gc",
}


@dataclass(frozen=True)
class Event:
    t: int
    kind: str  # reconfigure | reconfigure_mm | fail | replace | elect
    arg: object = None


@dataclass
class Experiment:
    name: str
    duration: int
    clients: int = 8
    f: int = 1
    leaders: int = 1
    events: list = field(default_factory=list)
    seed: int = 0
    opts: str = "proactive,bypass,gc"
    extra_delay: dict = field(default_factory=dict)  # message class -> ms
    delay: tuple = (1, 2)  # simulator per-message latency range
    width: int = 1000  # latency window
    step: int = 250
    phases: dict = field(default_factory=dict)  # name -> (start, end)

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e.t)


@dataclass
class ExperimentResult:
    experiment: Experiment
    latencies: list  # (reply time, latency) over all clients
    rows: list
    summary: dict  # phase -> PhaseSummary
    partial: bool = False
    info: dict = field(default_factory=dict)


def leader_options(opts: str, base: LeaderOptions = SIM_LEADER_OPTIONS) -> LeaderOptions:
    flags = {x.strip() for x in opts.split(",") if x.strip() and x.strip() != "none"}
    unknown = flags - {"proactive", "bypass", "gc", "thrifty"}
    if unknown:
        raise ValueError(f"unknown options {sorted(unknown)}")
    return replace(base, proactive="proactive" in flags, bypass="bypass" in flags,
                   gc="gc" in flags, thrifty="thrifty" in flags)


# --------------------------------------------------------------------------
# Scripts
# --------------------------------------------------------------------------

def reconfig_experiment(f: int = 1, clients: int = 8, seed: int = 0, duration: int = 35000,
                        reconfig_start: int = 10000, reconfig_end: int = 20000,
                        fail_at: int = 25000, replace_after: int = 5000,
                        opts: str = "proactive,bypass,gc") -> Experiment:
    """Reconfigure the acceptors once a second, then fail one and replace it."""
    events = [Event(t, "reconfigure") for t in range(reconfig_start, reconfig_end, 1000)]
    events.append(Event(fail_at, "fail", "acceptor"))
    events.append(Event(fail_at + replace_after, "replace"))
    phases = {"quiet": (1000, reconfig_start), "reconfig": (reconfig_start, reconfig_end),
              "after": (reconfig_end, fail_at), "failed": (fail_at, fail_at + replace_after),
              "replaced": (fail_at + replace_after, duration)}
    return Experiment("reconfig", duration, clients, f, events=events, seed=seed, opts=opts,
                      phases=phases)


def ablation_experiment(mode: str = "all", seed: int = 0, duration: int = 20000,
                        clients: int = 8, delay_ms: int = 250) -> Experiment:
    """Five acceptor reconfigurations under slow Phase1B and MatchB replies."""
    events = [Event(t, "reconfigure") for t in range(3000, duration, 3000)][:5]
    return Experiment(f"ablation-{mode}", duration, clients, events=events, seed=seed,
                      opts=OPT_SETS[mode], extra_delay={"Phase1B": delay_ms, "MatchB": delay_ms},
                      width=500, step=50,
                      phases={"steady": (500, events[0].t)})


def leader_failure_experiment(seed: int = 0, duration: int = 20000, clients: int = 8,
                              fail_at: int = 7000, elect_at: int = 12000) -> Experiment:
    events = [Event(fail_at, "fail", "l1"), Event(elect_at, "elect", "l2")]
    return Experiment("leader-failure", duration, clients, leaders=2, events=events, seed=seed,
                      width=1000, step=250,
                      phases={"before": (1000, fail_at), "gap": (fail_at, elect_at),
                              "after": (elect_at, duration)})


def mm_reconfig_experiment(seed: int = 0, duration: int = 20000, clients: int = 8,
                           start: int = 5000, end: int = 15000) -> Experiment:
    events = [Event(t, "reconfigure_mm") for t in range(start, end, 1000)]
    return Experiment("mm-reconfig", duration, clients, events=events, seed=seed,
                      phases={"quiet": (1000, start), "reconfig": (start, end)})


def activation_experiment(seed: int = 0, reconfigs: int = 5, clients: int = 4) -> Experiment:
    """Uniform unit latency; used to time reconfiguration activation exactly."""
    events = [Event(200 + 100 * i, "reconfigure") for i in range(reconfigs)]
    return Experiment("activation", 200 + 100 * reconfigs + 100, clients, events=events,
                      seed=seed, delay=(1, 1), width=100, step=100)


EXPERIMENTS = {
    "reconfig": reconfig_experiment,
    "ablation": ablation_experiment,
    "leader-failure": leader_failure_experiment,
    "mm-reconfig": mm_reconfig_experiment,
    "activation": activation_experiment,
}


# --------------------------------------------------------------------------
# Simulator target
# --------------------------------------------------------------------------

class _Script:
    """Turns experiment events into concrete actions, shared by both targets."""

    def __init__(self, exp: Experiment, acceptors, matchmakers):
        self.rng = random.Random(f"{exp.seed}:script")
        self.n = 2 * exp.f + 1
        self.acceptors = list(acceptors)
        self.matchmakers = list(matchmakers)
        self.failed: set = set()
        self.current = tuple(self.acceptors[:self.n])

    def pick_acceptors(self, avoid_failed: bool = True):
        pool = [a for a in self.acceptors if not (avoid_failed and a in self.failed)]
        self.current = tuple(sorted(self.rng.sample(pool, self.n)))
        return self.current

    def pick_matchmakers(self):
        return tuple(sorted(self.rng.sample(self.matchmakers, self.n)))

    def fail_target(self, arg):
        if arg == "acceptor":
            node = self.rng.choice(self.current)
        else:
            node = arg
        self.failed.add(node)
        return node


def run_sim(exp: Experiment, *, observe: bool = False) -> ExperimentResult:
    plan = FaultPlan(delay=tuple(exp.delay), extra_delay=dict(exp.extra_delay))
    sim = Simulator(exp.seed, plan)
    spec = ClusterSpec(f=exp.f, leaders=exp.leaders, clients=exp.clients,
                       options=leader_options(exp.opts), client_timeout=1000)
    cluster = Cluster(sim, spec, seed=exp.seed)
    script = _Script(exp, cluster.acceptor_ids, cluster.matchmaker_ids)
    cluster.elect(0)
    info = {"reconfigure_times": [], "queued": {}, "events": []}

    def apply(ev: Event):
        if ev.kind in ("reconfigure", "replace"):
            acc = script.pick_acceptors()
            info["reconfigure_times"].append(sim.now)
            for p in cluster.leader_ids:
                if p in sim.nodes:
                    sim.inject(sim.now, p, Reconfigure(acc))
            info["events"].append((sim.now, ev.kind, acc))
        elif ev.kind == "reconfigure_mm":
            members = script.pick_matchmakers()
            sim.inject(sim.now, cluster.driver_id, ReconfigureMatchmakers(members))
            info["events"].append((sim.now, ev.kind, members))
        elif ev.kind == "fail":
            node = script.fail_target(ev.arg)
            sim.crash(node)
            info["events"].append((sim.now, ev.kind, node))
        elif ev.kind == "elect":
            sim.inject(sim.now, ev.arg, BecomeLeader())
            info["events"].append((sim.now, ev.kind, ev.arg))
        else:
            raise ValueError(f"unknown event {ev.kind!r}")

    for ev in exp.events:
        sim.at(ev.t, lambda ev=ev: apply(ev))

    def snapshot(label):
        total = sum(sim.nodes[p].queued_total for p in cluster.leader_ids if p in sim.nodes)
        info["queued"][label] = total

    for name, (start, end) in exp.phases.items():
        sim.at(start, lambda n=name: snapshot(f"{n}:start"))
        sim.at(end, lambda n=name: snapshot(f"{n}:end"))
    sim.run(exp.duration)
    latencies = sorted(x for c in cluster.clients() for x in c.latencies)
    rows = windows(latencies, 0, exp.duration, exp.width, exp.step)
    summary = {name: summarize(latencies, s, e, exp.width, exp.step)
               for name, (s, e) in exp.phases.items()}
    result = ExperimentResult(exp, latencies, rows, summary, info=info)
    if observe:
        result.info["sim"] = sim
        result.info["cluster"] = cluster
    return result


def run_experiment(exp: Experiment, target: str = "sim", **kwargs) -> ExperimentResult:
    if target == "sim":
        return run_sim(exp, **kwargs)
    if target == "net":
        from .net import run_net

        return run_net(exp, **kwargs)
    raise ValueError(f"unknown target {target!r}")


# --------------------------------------------------------------------------
# Derived measurements
# --------------------------------------------------------------------------

def activation_delays(observations, reconfigure_times) -> list:
    """Time from each reconfigure event to the first Phase2A in its new round."""
    out = []
    for t in reconfigure_times:
        new_round = None
        for o in observations:
            if o[0] >= t and o[1] == "round_config" and o[3] == "log":
                new_round = o[4]
                break
        if new_round is None:
            out.append(None)
            continue
        first = next((o[0] for o in observations
                      if o[1] == "propose" and o[5] == new_round), None)
        out.append(None if first is None else first - t)
    return out


def max_latency_after(latencies, times, span: int) -> list:
    """Largest latency among replies within ``span`` ms after each time."""
    out = []
    for t in times:
        vals = [lat for rt, lat in latencies if t <= rt < t + span]
        out.append(max(vals) if vals else 0)
    return out


def zero_throughput_gaps(latencies, times, span: int, gap: int = 100) -> list:
    """For each time, the longest stretch within ``span`` with no replies."""
    out = []
    replies = sorted(rt for rt, _ in latencies)
    for t in times:
        inside = [rt for rt in replies if t <= rt < t + span]
        edges = [t] + inside + [t + span]
        out.append(max(b - a for a, b in zip(edges, edges[1:])))
    return out
