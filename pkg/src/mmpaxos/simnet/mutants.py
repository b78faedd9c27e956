"""Deliberately broken node variants used to show the oracle catches bugs."""
from __future__ import annotations

from ..acceptor import AcceptorNode, AcceptorState
from ..matchmaker import MatchmakerNode, MatchmakerState


class NoPromiseAcceptorState(AcceptorState):
    # accepts Phase2A even below the promised round
    enforce_promise = False


class NoPromiseAcceptorNode(AcceptorNode):
    state_class = NoPromiseAcceptorState


class NonMonotoneMatchmakerState(MatchmakerState):
    # accepts MatchA for rounds below ones it already saw
    enforce_monotone = False


class NonMonotoneMatchmakerNode(MatchmakerNode):
    state_class = NonMonotoneMatchmakerState


ACCEPTOR_PROMISE = "acceptor-promise"
MATCHMAKER_MONOTONE = "matchmaker-monotone"
GC_GUARD = "gc-guard"

MUTANTS = (ACCEPTOR_PROMISE, MATCHMAKER_MONOTONE, GC_GUARD)


def acceptor_class(mutant):
    return NoPromiseAcceptorNode if mutant == ACCEPTOR_PROMISE else AcceptorNode


def matchmaker_class(mutant):
    return NonMonotoneMatchmakerNode if mutant == MATCHMAKER_MONOTONE else MatchmakerNode


def guard_gc(mutant) -> bool:
    return mutant != GC_GUARD
