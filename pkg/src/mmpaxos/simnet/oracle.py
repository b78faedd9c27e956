"""Brute-force safety oracle over simulator observations.

Inputs are the observation tuples nodes emit, stamped with virtual time:

* ``(t, "round_config", proposer, instance, round, config)``
* ``(t, "vote", acceptor, instance, slot, round, value)``
* ``(t, "propose", proposer, instance, slot, round, value)``
* ``(t, "history", proposer, instance, round, history, watermark)``
* ``(t, "match_b", matchmaker, epoch, round, config, watermark, history)``
* ``(t, "execute", replica, slot, value)``
* ``(t, "halt", node, reason)``

A value is chosen in a slot when every member of some Phase 2 quorum of the
round's configuration voted for it in that round at some point of the trace.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field


@dataclass
class SafetyReport:
    ok: bool
    violations: list = field(default_factory=list)
    chosen: dict = field(default_factory=dict)  # (instance, slot) -> {value: [rounds]}

    def __bool__(self) -> bool:
        return self.ok


def chosen_values(observations):
    """Returns ({(instance, slot): {value: sorted rounds}}, configs, problems)."""
    configs = {}
    problems = []
    voters = defaultdict(set)
    for o in observations:
        kind = o[1]
        if kind == "round_config":
            _, _, node, instance, rnd, config = o
            prev = configs.get((instance, rnd))
            if prev is not None and prev != config:
                problems.append(f"round {rnd} of {instance} used two configurations")
            configs[(instance, rnd)] = config
        elif kind == "vote":
            _, _, acc, instance, slot, rnd, value = o
            voters[(instance, slot, rnd, value)].add(acc)
    chosen = defaultdict(dict)
    for (instance, slot, rnd, value), accs in voters.items():
        config = configs.get((instance, rnd))
        if config is None:
            problems.append(f"vote in {instance} round {rnd} with unknown configuration")
            continue
        if config.is_phase2_quorum(accs):
            chosen[(instance, slot)].setdefault(value, []).append(rnd)
    for per_slot in chosen.values():
        for rounds in per_slot.values():
            rounds.sort()
    return dict(chosen), configs, problems


def check_safety(observations) -> SafetyReport:
    observations = list(observations)
    chosen, configs, violations = chosen_values(observations)

    for (instance, slot), values in chosen.items():
        if len(values) > 1:
            violations.append(f"{instance} slot {slot}: several values chosen: "
                              f"{sorted(values.items(), key=repr)}")

    # a proposal in round i must agree with anything chosen below i
    for o in observations:
        if o[1] != "propose":
            continue
        _, _, node, instance, slot, rnd, value = o
        for other, rounds in chosen.get((instance, slot), {}).items():
            if other != value and rounds[0] < rnd:
                violations.append(f"{node} proposed {value!r} in {rnd} for {instance} slot "
                                  f"{slot} but {other!r} was chosen in {rounds[0]}")

    # matchmakers agree on the configuration of every round
    per_round = defaultdict(set)
    for o in observations:
        if o[1] == "match_b":
            per_round[o[4]].add(o[5])
            for rnd, config in o[7]:
                per_round[rnd].add(config)
    for rnd, cs in per_round.items():
        if len(cs) > 1:
            violations.append(f"matchmakers disagree on round {rnd}: {sorted(map(repr, cs))}")

    # two rounds that both finished matchmaking: the later one must have
    # learned the earlier one's configuration unless it was collected
    histories = defaultdict(dict)
    for o in observations:
        if o[1] == "history":
            _, _, node, instance, rnd, hist, w = o
            histories[instance].setdefault(rnd, (dict(hist), w))
    for instance, per_round in histories.items():
        ordered = sorted(per_round)
        for a, i in enumerate(ordered):
            config = configs.get((instance, i))
            if config is None:
                continue
            for j in ordered[a + 1:]:
                hist, w = per_round[j]
                if i >= w and hist.get(i) != config:
                    violations.append(f"{instance}: history of round {j} misses round {i}")

    # replicas execute prefix-comparable logs matching the chosen values
    executed = defaultdict(dict)
    for o in observations:
        if o[1] == "execute":
            _, _, rep, slot, value = o
            executed[slot].setdefault(value, rep)
    for slot, values in executed.items():
        if len(values) > 1:
            violations.append(f"replicas executed different values in slot {slot}")
        vals = chosen.get(("log", slot))
        if vals:
            for v in values:
                if v not in vals:
                    violations.append(f"slot {slot}: executed {v!r}, chosen {sorted(vals, key=repr)}")

    for o in observations:
        if o[1] == "halt":
            violations.append(f"{o[2]} halted: {o[3]}")

    return SafetyReport(not violations, violations, chosen)
