"""Loopback target: server nodes run as processes, clients in this process."""
from __future__ import annotations

import asyncio
import logging
import tempfile
import time

from ..client import ClientNode
from ..core import BecomeLeader, Reconfigure, ReconfigureMatchmakers
from ..runtime.host import NodeHost, query_stats
from ..runtime.launch import LocalCluster
from ..runtime.view import ViewFile
from .experiments import Event, Experiment, ExperimentResult, _Script
from .metrics import summarize, windows

logger = logging.getLogger(__name__)


def _delay_flag(extra: dict) -> str:
    return ",".join(f"{k}={v}" for k, v in sorted(extra.items()))


async def _run(exp: Experiment, workdir, warmup: float) -> ExperimentResult:
    cluster = LocalCluster(workdir, f=exp.f, leaders=exp.leaders, clients=exp.clients,
                           opts=exp.opts or "none", extra_delay=_delay_flag(exp.extra_delay))
    cluster.start()
    hosts = []
    info = {"reconfigure_times": [], "queued": {}, "events": [], "workdir": str(workdir)}
    partial = False
    try:
        vf = ViewFile(cluster.view_path)
        view = vf.view
        await cluster.control("l1", BecomeLeader())
        await asyncio.sleep(warmup)
        t0 = time.monotonic()

        def clock():
            return int((time.monotonic() - t0) * 1000)

        client_ids = [nid for nid, role in cluster.roles.items() if role == "client"]
        for cid in client_ids:
            node = ClientNode(cid, view, timeout=1000)
            host = NodeHost(node, vf, view.addresses[cid], clock=clock)
            await host.start()
            hosts.append(host)

        script = _Script(exp, view.acceptors, [f"m{i + 1}" for i in range(2 * len(view.replicas))])
        leaders = list(view.leaders)

        async def apply(ev: Event):
            now = clock()
            if ev.kind in ("reconfigure", "replace"):
                acc = script.pick_acceptors()
                info["reconfigure_times"].append(now)
                for p in leaders:
                    if p in cluster.procs:
                        await cluster.control(p, Reconfigure(acc))
                info["events"].append((now, ev.kind, acc))
            elif ev.kind == "reconfigure_mm":
                members = script.pick_matchmakers()
                await cluster.control("d1", ReconfigureMatchmakers(members))
                info["events"].append((now, ev.kind, members))
            elif ev.kind == "fail":
                node = script.fail_target(ev.arg)
                cluster.kill(node)
                info["events"].append((now, ev.kind, node))
            elif ev.kind == "elect":
                await cluster.control(ev.arg, BecomeLeader())
                info["events"].append((now, ev.kind, ev.arg))

        async def snapshot(label):
            total = 0
            for p in leaders:
                if p in cluster.procs:
                    try:
                        total += (await query_stats(view.addresses[p]))["queued_total"]
                    except (OSError, asyncio.TimeoutError):
                        pass
            info["queued"][label] = total

        timeline = [(ev.t, 0, ev) for ev in exp.events]
        for name, (s, e) in exp.phases.items():
            timeline += [(s, 1, f"{name}:start"), (e, 1, f"{name}:end")]
        timeline.sort(key=lambda x: (x[0], x[1]))
        for t, kind, item in timeline:
            if t > exp.duration:
                continue
            await asyncio.sleep(max(0.0, t / 1000 - (time.monotonic() - t0)))
            if kind == 0:
                await apply(item)
            else:
                await snapshot(item)
        await asyncio.sleep(max(0.0, exp.duration / 1000 - (time.monotonic() - t0)))
        latencies = sorted(x for h in hosts for x in h.node.latencies)
    except (OSError, RuntimeError, TimeoutError) as exc:
        logger.error("net run failed: %s", exc)
        latencies = sorted(x for h in hosts for x in h.node.latencies)
        partial = True
    finally:
        for h in hosts:
            await h.stop()
        cluster.stop()
    rows = windows(latencies, 0, exp.duration, exp.width, exp.step)
    summary = {name: summarize(latencies, s, e, exp.width, exp.step)
               for name, (s, e) in exp.phases.items()}
    return ExperimentResult(exp, latencies, rows, summary, partial=partial, info=info)


def run_net(exp: Experiment, workdir=None, warmup: float = 1.0) -> ExperimentResult:
    if workdir is None:
        with tempfile.TemporaryDirectory(prefix="mmpaxos-") as tmp:
            return asyncio.run(_run(exp, tmp, warmup))
    return asyncio.run(_run(exp, workdir, warmup))
