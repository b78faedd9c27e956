"""Command line entry point: ``mmpaxos <command>`` or ``python -m mmpaxos.cli``."""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

logger = logging.getLogger("mmpaxos")


def _cmd_serve(args) -> int:
    from .runtime.launch import run_serve

    run_serve(args.role, args.id, args.view, args.journal_dir, opts=args.opts,
              extra_delay=args.extra_delay, app=args.app)
    return 0


def _cmd_bench(args) -> int:
    from .bench.experiments import EXPERIMENTS, OPT_SETS, run_experiment
    from .bench.metrics import compare_windows, write_csv

    make = EXPERIMENTS[args.experiment]
    kwargs = {"seed": args.seed}
    if args.experiment == "ablation":
        kwargs["mode"] = args.mode
    if args.experiment not in ("ablation", "activation"):
        kwargs["clients"] = args.clients
    if args.experiment == "reconfig":
        kwargs["f"] = args.f
        kwargs["replace_after"] = args.replace_after
    exp = make(**kwargs)
    if args.opts is not None:
        exp.opts = OPT_SETS.get(args.opts, args.opts)
    if args.duration:
        exp.duration = args.duration
    kwargs = {"workdir": args.workdir} if args.target == "net" and args.workdir else {}
    result = run_experiment(exp, args.target, **kwargs)
    if args.out:
        write_csv(result.rows, args.out)
        logger.info("wrote %d rows to %s", len(result.rows), args.out)
    summary = {name: vars(s) for name, s in result.summary.items()}
    report = {"experiment": exp.name, "target": args.target, "partial": result.partial,
              "commands": len(result.latencies), "phases": summary,
              "queued": result.info.get("queued", {})}
    if "quiet" in exp.phases and "reconfig" in exp.phases:
        d = compare_windows(result.rows, exp.phases["quiet"], exp.phases["reconfig"])
        report["quiet_vs_reconfig"] = vars(d)
    print(json.dumps(report, indent=2, default=str))
    return 1 if result.partial else 0


def _cmd_compare(args) -> int:
    from .bench.metrics import compare_windows

    d = compare_windows(args.csv, tuple(args.phase_a), tuple(args.phase_b),
                        min_windows=args.min_windows)
    print(json.dumps(vars(d), indent=2))
    if args.bound is not None:
        return 0 if d.within(args.bound) else 1
    return 1 if d.insufficient else 0


def _cmd_corpus(args) -> int:
    from .simnet.scenarios import run_corpus

    seeds = range(args.start, args.start + args.count)
    failures, count = run_corpus(seeds, args.mutant, stop_on_violation=args.stop)
    for r in failures:
        print(f"seed {r.schedule.seed}: {r.report.violations[0]}")
    print(f"{count} schedules, {len(failures)} with violations")
    return 1 if failures and not args.mutant else 0


def _cmd_sim(args) -> int:
    from .simnet.scenarios import Schedule, corpus_schedule, run_schedule

    if args.schedule:
        schedule = Schedule.loads(Path(args.schedule).read_text())
    else:
        schedule = corpus_schedule(args.seed)
    result = run_schedule(schedule, args.mutant, keep=bool(args.trace),
                          record_trace=bool(args.trace))
    if args.trace:
        result.sim.dump_trace(args.trace)
    print(f"seed {schedule.seed}: completed={result.completed} events={result.events} "
          f"trace={result.trace_hash} ok={result.report.ok}")
    for v in result.report.violations:
        print(f"  violation: {v}")
    return 0 if result.report.ok else 1


def _cmd_explore(args) -> int:
    from .simnet.explore import explore_exhaustive, fast_topology, matchmaker_topology

    topo = fast_topology() if args.mode == "fast" else matchmaker_topology(args.mutant)
    result = explore_exhaustive(topo, depth=args.depth)
    print(f"{topo.name}: ok={result.ok} states={result.states} depth={result.depth} "
          f"partial={result.partial}")
    for v in result.violations:
        print(f"  violation: {v}")
    return 0 if result.ok else 1


def _cmd_control(args) -> int:
    from .core import BecomeLeader, Reconfigure, ReconfigureMatchmakers
    from .runtime.host import send_message
    from .runtime.view import load_view

    view = load_view(args.view)
    if args.action == "elect":
        msg = BecomeLeader()
    elif args.action == "reconfigure":
        msg = Reconfigure(tuple(args.members))
    else:
        msg = ReconfigureMatchmakers(tuple(args.members))
    asyncio.run(send_message(view.addresses[args.node], msg, dst=args.node))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmpaxos")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run one node process")
    s.add_argument("--id", required=True)
    s.add_argument("--role", required=True,
                   choices=["leader", "acceptor", "matchmaker", "replica", "driver"])
    s.add_argument("--view", required=True)
    s.add_argument("--journal-dir", required=True)
    s.add_argument("--opts", default="proactive,bypass,gc")
    s.add_argument("--extra-delay", default="", help="e.g. Phase1B=250,MatchB=250")
    s.add_argument("--app", default="noop")
    s.set_defaults(func=_cmd_serve)

    b = sub.add_parser("bench", help="run an experiment and write a CSV")
    b.add_argument("experiment", choices=["reconfig", "ablation", "leader-failure",
                                          "mm-reconfig", "activation"])
    b.add_argument("--target", choices=["sim", "net"], default="sim")
    b.add_argument("--f", type=int, default=1)
    b.add_argument("--clients", type=int, default=8)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--opts", default=None,
                   help="none, gc, gc+bypass, all, or a list of proactive,bypass,gc,thrifty")
    b.add_argument("--mode", default="all", choices=["none", "gc", "gc+bypass", "all"],
                   help="ablation mode")
    b.add_argument("--replace-after", type=int, default=5000, help="ms before replacing")
    b.add_argument("--duration", type=int, default=0, help="override duration in ms")
    b.add_argument("--out", help="CSV output path")
    b.add_argument("--workdir", help="net target: directory for view, journals and logs")
    b.set_defaults(func=_cmd_bench)

    c = sub.add_parser("compare", help="compare two phases of a metrics CSV")
    c.add_argument("csv")
    c.add_argument("--phase-a", type=int, nargs=2, required=True, metavar=("START", "END"))
    c.add_argument("--phase-b", type=int, nargs=2, required=True, metavar=("START", "END"))
    c.add_argument("--min-windows", type=int, default=3)
    c.add_argument("--bound", type=float, help="fail unless |deltas| are within this")
    c.set_defaults(func=_cmd_compare)

    k = sub.add_parser("corpus", help="run seeded simulator schedules through the oracle")
    k.add_argument("--count", type=int, default=1000)
    k.add_argument("--start", type=int, default=0)
    k.add_argument("--mutant", choices=["acceptor-promise", "matchmaker-monotone", "gc-guard"])
    k.add_argument("--stop", action="store_true", help="stop at the first violation")
    k.set_defaults(func=_cmd_corpus)

    r = sub.add_parser("sim", help="run one simulator schedule")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--schedule", help="schedule file (key = value)")
    r.add_argument("--mutant", choices=["acceptor-promise", "matchmaker-monotone", "gc-guard"])
    r.add_argument("--trace", help="write the trace here")
    r.set_defaults(func=_cmd_sim)

    e = sub.add_parser("explore", help="exhaustive small-scope exploration")
    e.add_argument("mode", choices=["matchmaker", "fast"])
    e.add_argument("--depth", type=int, default=10)
    e.add_argument("--mutant", choices=["acceptor-promise", "matchmaker-monotone", "gc-guard"])
    e.set_defaults(func=_cmd_explore)

    t = sub.add_parser("control", help="send a control message to a running node")
    t.add_argument("action", choices=["elect", "reconfigure", "reconfigure-matchmakers"])
    t.add_argument("node")
    t.add_argument("members", nargs="*")
    t.add_argument("--view", required=True)
    t.set_defaults(func=_cmd_control)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
