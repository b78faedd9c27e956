"""Building nodes by role and running a local multi-process cluster."""
from __future__ import annotations

import asyncio
import logging
import os
import signal
import socket
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

from ..acceptor import AcceptorNode
from ..client import ClientNode
from ..discovery import ClusterView
from ..leader import LeaderNode, LeaderOptions
from ..matchmaker import MatchmakerNode
from ..mmreconfig import ReconfigDriverNode
from ..replica import APPS, ReplicaNode
from .host import send_message
from .view import save_view

logger = logging.getLogger(__name__)

# protocol timeouts for the network, in milliseconds
NET_LEADER_OPTIONS = LeaderOptions(heartbeat=100, deadline_factor=5, auto_elect=False,
                                   resend_after=300, phase_timeout=1000)
ROLES = ("leader", "acceptor", "matchmaker", "replica", "driver", "client")


def group_size(view: ClusterView) -> int:
    return len(view.replicas) or 3


def make_node(role: str, node_id: str, view: ClusterView, journal=None, *,
              options: LeaderOptions | None = None, app: str = "noop", seed: int = 0,
              client_timeout: int = 1000):
    n = group_size(view)
    if role == "leader":
        return LeaderNode(node_id, view, view.acceptors[:n], journal=journal,
                          options=options or NET_LEADER_OPTIONS, seed=seed)
    if role == "acceptor":
        return AcceptorNode(node_id, journal)
    if role == "matchmaker":
        epochs = (view.matchmaker_epoch,) if node_id in view.matchmakers else ()
        return MatchmakerNode(node_id, journal, epochs=epochs)
    if role == "replica":
        return ReplicaNode(node_id, view, journal=journal, app=APPS[app](), fetch_after=300)
    if role == "driver":
        return ReconfigDriverNode(node_id, view, journal=journal, retry=500, seed=seed)
    if role == "client":
        return ClientNode(node_id, view, timeout=client_timeout)
    raise ValueError(f"unknown role {role!r}")


def free_ports(count: int) -> list:
    socks = []
    try:
        for _ in range(count):
            s = socket.socket()
            s.bind(("127.0.0.1", 0))
            socks.append(s)
        return [s.getsockname()[1] for s in socks]
    finally:
        for s in socks:
            s.close()


def local_view(f: int = 1, leaders: int = 1, clients: int = 1) -> tuple:
    """A loopback view with fresh ports. Returns (view, {node: role})."""
    n = 2 * f + 1
    roles = {}
    for i in range(leaders):
        roles[f"l{i + 1}"] = "leader"
    for i in range(2 * n):
        roles[f"a{i + 1}"] = "acceptor"
    for i in range(2 * n):
        roles[f"m{i + 1}"] = "matchmaker"
    for i in range(n):
        roles[f"r{i + 1}"] = "replica"
    roles["d1"] = "driver"
    for i in range(clients):
        roles[f"c{i + 1}"] = "client"
    ports = free_ports(len(roles))
    view = ClusterView(
        matchmaker_epoch=0,
        matchmakers=tuple(f"m{i + 1}" for i in range(n)),
        acceptors=tuple(f"a{i + 1}" for i in range(2 * n)),
        replicas=tuple(f"r{i + 1}" for i in range(n)),
        leaders=tuple(f"l{i + 1}" for i in range(leaders)),
        addresses={nid: ("127.0.0.1", p) for nid, p in zip(roles, ports)})
    return view, roles


class LocalCluster:
    """Server nodes as separate processes on loopback.

    Clients are not launched; callers host them in-process (see
    ``bench.net``) so that latencies can be measured directly.
    """

    def __init__(self, workdir, f: int = 1, leaders: int = 1, clients: int = 1, *,
                 opts: str = "proactive,bypass,gc", extra_delay: str = "",
                 app: str = "noop"):
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.view, self.roles = local_view(f, leaders, clients)
        self.view_path = self.workdir / "view.ini"
        save_view(self.view, self.view_path)
        self.opts = opts
        self.extra_delay = extra_delay
        self.app = app
        self.procs: dict = {}

    def servers(self):
        return [nid for nid, role in self.roles.items() if role != "client"]

    def command(self, nid: str) -> list:
        cmd = [sys.executable, "-m", "mmpaxos.cli", "serve", "--id", nid,
               "--role", self.roles[nid], "--view", str(self.view_path),
               "--journal-dir", str(self.workdir / "journal"), "--opts", self.opts,
               "--app", self.app]
        if self.extra_delay and self.roles[nid] in ("acceptor", "matchmaker"):
            cmd += ["--extra-delay", self.extra_delay]
        return cmd

    def start(self, nodes=None) -> None:
        env = dict(os.environ)
        src = str(Path(__file__).resolve().parents[2])
        env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
        log_dir = self.workdir / "logs"
        log_dir.mkdir(exist_ok=True)
        for nid in nodes or self.servers():
            log = open(log_dir / f"{nid}.log", "ab")
            self.procs[nid] = subprocess.Popen(self.command(nid), stdout=log,
                                               stderr=subprocess.STDOUT, env=env)
        self.wait_listening(nodes or self.servers())

    def wait_listening(self, nodes, timeout: float = 20.0) -> None:
        deadline = time.monotonic() + timeout
        for nid in nodes:
            host, port = self.view.addresses[nid]
            while True:
                try:
                    socket.create_connection((host, port), timeout=0.2).close()
                    break
                except OSError:
                    if self.procs[nid].poll() is not None:
                        raise RuntimeError(f"{nid} exited with {self.procs[nid].returncode}")
                    if time.monotonic() > deadline:
                        raise TimeoutError(f"{nid} did not start listening")
                    time.sleep(0.05)

    def kill(self, nid: str) -> None:
        proc = self.procs.pop(nid, None)
        if proc is not None and proc.poll() is None:
            proc.send_signal(signal.SIGKILL)
            proc.wait()

    def stop(self) -> None:
        for nid in list(self.procs):
            proc = self.procs.pop(nid)
            if proc.poll() is None:
                proc.terminate()
        time.sleep(0.05)

    async def control(self, nid: str, msg) -> None:
        await send_message(self.view.addresses[nid], msg, dst=nid)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        for nid in list(self.procs):
            self.kill(nid)


def parse_opts(text: str, base: LeaderOptions = NET_LEADER_OPTIONS) -> LeaderOptions:
    flags = {x.strip() for x in text.split(",") if x.strip() and x.strip() != "none"}
    unknown = flags - {"proactive", "bypass", "gc", "thrifty"}
    if unknown:
        raise ValueError(f"unknown options {sorted(unknown)}")
    return replace(base, proactive="proactive" in flags, bypass="bypass" in flags,
                   gc="gc" in flags, thrifty="thrifty" in flags)


def parse_extra_delay(text: str) -> dict:
    """``"Phase1B=250,MatchB=250"`` -> {"Phase1B": 250, "MatchB": 250}."""
    out = {}
    for part in text.split(","):
        if part.strip():
            name, _, ms = part.partition("=")
            out[name.strip()] = int(ms)
    return out


async def serve(role: str, node_id: str, view_path, journal_dir, *, opts: str = "",
                extra_delay: str = "", app: str = "noop") -> None:
    from .host import NodeHost
    from .journal import FileJournal
    from .view import ViewFile

    vf = ViewFile(view_path)
    view = vf.view
    if node_id not in view.addresses:
        raise ValueError(f"{node_id} has no address in {view_path}")
    journal = FileJournal(Path(journal_dir) / f"{node_id}.journal",
                          fsync=role in ("acceptor", "matchmaker", "leader", "driver"))
    options = parse_opts(opts) if opts else NET_LEADER_OPTIONS
    node = make_node(role, node_id, view, journal, options=options, app=app)
    host = NodeHost(node, vf, view.addresses[node_id], journal=journal,
                    extra_delay=parse_extra_delay(extra_delay),
                    publish_view=role == "driver")
    logger.info("%s (%s) listening on %s:%d", node_id, role, *view.addresses[node_id])
    await host.serve_forever()


def run_serve(*args, **kwargs) -> None:
    try:
        asyncio.run(serve(*args, **kwargs))
    except KeyboardInterrupt:
        pass
