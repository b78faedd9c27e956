"""Shared vocabulary: rounds, configurations, values and the message algebra.

Every node role imports from here. All types are immutable so they can be
placed in sets, shared between simulated nodes and hashed for state digests.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional


class Round(NamedTuple):
    """A ballot ``(counter, owner, sub)``, ordered lexicographically.

    The owner is the id of the proposer that may use the round, so the owner
    of ``(c, p, s)`` always owns the next round ``(c, p, s + 1)``.
    """

    counter: int
    owner: str
    sub: int

    def __str__(self) -> str:
        if self.counter < 0:
            return "⊥"
        return f"({self.counter},{self.owner},{self.sub})"

    @property
    def is_bottom(self) -> bool:
        return self.counter < 0


BOTTOM = Round(-1, "", 0)


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def round_compare(a: Round, b: Round) -> Ordering:
    # every bottom value is the same sentinel regardless of its other fields
    if a.is_bottom and b.is_bottom:
        return Ordering.EQUAL
    if a.is_bottom:
        return Ordering.LESS
    if b.is_bottom:
        return Ordering.GREATER
    if a < b:
        return Ordering.LESS
    if a > b:
        return Ordering.GREATER
    return Ordering.EQUAL


def round_successor(r: Round) -> Round:
    if r.is_bottom:
        raise ValueError("bottom round has no successor")
    return Round(r.counter, r.owner, r.sub + 1)


def first_round(owner: str, counter: int = 0) -> Round:
    return Round(counter, owner, 0)


# --------------------------------------------------------------------------
# Configurations
# --------------------------------------------------------------------------

Quorum = frozenset


@dataclass(frozen=True)
class Configuration:
    label: str
    acceptors: frozenset
    phase1_quorums: frozenset
    phase2_quorums: frozenset

    def __repr__(self) -> str:
        return f"Configuration({self.label!r}, {sorted(self.acceptors)})"

    def is_phase1_quorum(self, nodes) -> bool:
        return any(q <= nodes for q in self.phase1_quorums)

    def is_phase2_quorum(self, nodes) -> bool:
        return any(q <= nodes for q in self.phase2_quorums)

    def relabel(self, label: str) -> "Configuration":
        return Configuration(label, self.acceptors, self.phase1_quorums, self.phase2_quorums)


def _subsets(members, size):
    return frozenset(frozenset(c) for c in itertools.combinations(sorted(members), size))


def majority_configuration(label: str, acceptors: Iterable[str]) -> Configuration:
    """Configuration whose quorums (both phases) are all majorities."""
    members = frozenset(acceptors)
    if not members:
        raise ValueError("a configuration needs at least one acceptor")
    size = len(members) // 2 + 1
    quorums = _subsets(members, size)
    return Configuration(label, members, quorums, quorums)


def flexible_configuration(label, acceptors, phase1_size, phase2_size) -> Configuration:
    """Threshold quorums: every ``phase1_size`` subset and every ``phase2_size`` subset."""
    members = frozenset(acceptors)
    return Configuration(label, members, _subsets(members, phase1_size),
                         _subsets(members, phase2_size))


def fast_configuration(label: str, acceptors: Iterable[str]) -> Configuration:
    """f+1 acceptors, one unanimous phase 2 quorum and singleton phase 1 quorums."""
    members = frozenset(acceptors)
    return Configuration(label, members, frozenset(frozenset([a]) for a in members),
                         frozenset([members]))


@dataclass
class ConfigurationReport:
    ok: bool
    problems: list = field(default_factory=list)
    disjoint_pairs: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def validate_configuration(config: Configuration) -> ConfigurationReport:
    """Check subset, non-emptiness and pairwise phase 1 / phase 2 intersection."""
    problems = []
    if not config.phase1_quorums:
        problems.append("phase 1 quorum family is empty")
    if not config.phase2_quorums:
        problems.append("phase 2 quorum family is empty")
    for name, family in (("phase 1", config.phase1_quorums), ("phase 2", config.phase2_quorums)):
        for q in family:
            if not q:
                problems.append(f"empty {name} quorum")
            if not q <= config.acceptors:
                problems.append(f"{name} quorum {sorted(q)} is not a subset of the acceptors")
    disjoint = []
    for q1 in sorted(config.phase1_quorums, key=sorted):
        for q2 in sorted(config.phase2_quorums, key=sorted):
            if not q1 & q2:
                disjoint.append((tuple(sorted(q1)), tuple(sorted(q2))))
    ok = not problems and not disjoint
    return ConfigurationReport(ok, problems, disjoint)


# --------------------------------------------------------------------------
# Values
# --------------------------------------------------------------------------

class ValueKind(enum.IntEnum):
    COMMAND = 0
    NOOP = 1
    ANY = 2  # Fast Paxos "any value" marker, only valid inside Phase2A


@dataclass(frozen=True)
class Value:
    payload: bytes = b""
    kind: ValueKind = ValueKind.COMMAND
    client: str = ""
    seq: int = 0

    def __repr__(self) -> str:
        if self.kind is ValueKind.NOOP:
            return "noop"
        if self.kind is ValueKind.ANY:
            return "any"
        if self.client:
            return f"cmd({self.client}#{self.seq}:{self.payload!r})"
        return f"cmd({self.payload!r})"

    @property
    def is_noop(self) -> bool:
        return self.kind is ValueKind.NOOP

    @property
    def is_any(self) -> bool:
        return self.kind is ValueKind.ANY


NOOP = Value(b"", ValueKind.NOOP)
ANY = Value(b"", ValueKind.ANY)


def command(payload: bytes, client: str = "", seq: int = 0) -> Value:
    return Value(payload, ValueKind.COMMAND, client, seq)


# --------------------------------------------------------------------------
# Messages
# --------------------------------------------------------------------------
# Matchmaker-facing messages carry an ``epoch``: the generation of the
# matchmaker set they address, so that overlapping old/new matchmaker sets
# never mix replies.

MESSAGE_TYPES: list = []


def message(cls):
    cls = dataclass(frozen=True, slots=True)(cls)
    cls.TAG = len(MESSAGE_TYPES) + 1
    MESSAGE_TYPES.append(cls)
    return cls


@message
class MatchA:
    epoch: int
    round: Round
    config: Configuration


@message
class MatchB:
    epoch: int
    round: Round
    gc_watermark: Round
    history: tuple  # ((Round, Configuration), ...) sorted by round


@message
class GarbageA:
    epoch: int
    round: Round


@message
class GarbageB:
    epoch: int
    round: Round


@message
class Phase1A:
    round: Round
    first_slot: int = 0


@message
class Phase1B:
    round: Round
    votes: tuple = ()  # ((slot, vr, vv), ...) sorted by slot
    chosen_prefix: int = -1  # every slot <= this is chosen and stored on replicas
    chosen_slots: tuple = ()  # individually hinted slots beyond the prefix


@message
class Phase2A:
    round: Round
    slot: int
    value: Value


@message
class Phase2B:
    round: Round
    slot: int


@message
class FastPhase2B:
    round: Round
    slot: int
    value: Value


@message
class FastPropose:
    value: Value


@message
class ChosenHint:
    round: Round
    up_to: int


@message
class HintAck:
    round: Round
    up_to: int


@message
class StopA:
    epoch: int


@message
class StopB:
    epoch: int
    log: tuple  # ((Round, Configuration), ...)
    gc_watermark: Round


@message
class Bootstrap:
    epoch: int
    log: tuple
    gc_watermark: Round


@message
class BootstrapAck:
    epoch: int


@message
class Activate:
    epoch: int
    members: tuple
    log: tuple
    gc_watermark: Round


@message
class ActivateAck:
    epoch: int


@message
class ReconfigPaxos:
    """Wraps a single-decree Paxos message for the matchmaker set of ``epoch``."""

    epoch: int
    inner: object


@message
class ClientRequest:
    client: str
    seq: int
    payload: bytes


@message
class ClientReply:
    client: str
    seq: int
    payload: bytes


@message
class Redirect:
    leader: str


@message
class Chosen:
    slot: int
    value: Value


@message
class PrefixPersisted:
    slot: int


@message
class Nack:
    round: Round


@message
class Heartbeat:
    round: Round


@message
class LeaderElect:
    round: Round


@message
class WatermarkRequest:
    round: Round


@message
class WatermarkReply:
    round: Round
    slot: int


@message
class ReplicaFetch:
    first_slot: int


@message
class ReplicaFetchReply:
    entries: tuple  # ((slot, Value), ...)


# Control messages injected by a driver, bench or test harness.

@message
class BecomeLeader:
    pass


@message
class Reconfigure:
    acceptors: tuple


@message
class ReconfigureMatchmakers:
    members: tuple


@message
class Propose:
    """Asks a single-decree proposer to start a round with ``value``."""

    value: Optional[Value]


@message
class TimerFire:
    name: str


@message
class StateHashRequest:
    pass


@message
class StateHashReply:
    node: str
    digest: bytes


@message
class StatsRequest:
    pass


@message
class StatsReply:
    node: str
    stats: dict


MESSAGE_BY_TAG = {cls.TAG: cls for cls in MESSAGE_TYPES}


@dataclass(frozen=True, slots=True)
class Envelope:
    src: str
    dst: str
    seq: int
    msg: object
