"""Heartbeat-based leader election.

The leader sends heartbeats every ``heartbeat`` time units. A follower that
hears nothing for ``deadline_factor`` heartbeats starts an election in the
round ``(max observed counter + 1, self, 0)``. Rounds order by owner id on
equal counters, so of two simultaneous candidates the higher id wins.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import BOTTOM, Round

HEARTBEAT, ELECT = "heartbeat", "elect"


@dataclass
class ElectionState:
    node_id: str
    heartbeat: int = 10
    deadline_factor: int = 5
    enabled: bool = True
    leading: bool = False
    leader: str = ""
    highest: Round = BOTTOM
    deadline: int = 0
    last_heartbeat_sent: int = -(10 ** 9)

    @property
    def timeout(self) -> int:
        return self.heartbeat * self.deadline_factor

    def observe(self, r: Round, now: int) -> bool:
        """Record a round seen in a heartbeat or election message.

        Returns True when this node must step down.
        """
        if r.is_bottom:
            return False
        if r > self.highest:
            self.highest = r
        if r.owner == self.node_id:
            return False
        if self.leading and r > self._own_round:
            self.leading = False
            self.leader = r.owner
            self.deadline = now + self.timeout
            return True
        if not self.leading and r >= self.highest:
            self.leader = r.owner
            self.deadline = now + self.timeout
        return False

    _own_round: Round = BOTTOM

    def candidate_round(self) -> Round:
        return Round(max(self.highest.counter, -1) + 1, self.node_id, 0)

    def became_leader(self, r: Round, now: int) -> None:
        self.leading = True
        self.leader = self.node_id
        self._own_round = r
        if r > self.highest:
            self.highest = r

    def own_round_changed(self, r: Round) -> None:
        self._own_round = r
        if r > self.highest:
            self.highest = r

    def tick(self, now: int):
        """Returns ``HEARTBEAT``, ``(ELECT, round)`` or None."""
        if self.leading:
            if now - self.last_heartbeat_sent >= self.heartbeat:
                self.last_heartbeat_sent = now
                return HEARTBEAT
            return None
        if self.enabled and now >= self.deadline:
            self.deadline = now + self.timeout
            return ELECT, self.candidate_round()
        return None
