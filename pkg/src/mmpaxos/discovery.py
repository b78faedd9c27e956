"""Cluster view shared by nodes for discovery.

Nodes keep a reference to one ``ClusterView`` object. The simulator mutates
it in place; the network runtime reloads it from a file. A stale view is
harmless: matchmaker messages carry the epoch they address, and a node that
retired ignores them.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace


@dataclass
class ClusterView:
    version: int = 1
    matchmaker_epoch: int = 0
    matchmakers: tuple = ()
    acceptors: tuple = ()  # the pool acceptor configurations are drawn from
    replicas: tuple = ()
    leaders: tuple = ()
    addresses: dict = field(default_factory=dict)  # node id -> (host, port)

    def update(self, **changes) -> None:
        """Apply ``changes`` in place and bump the version."""
        for k, v in changes.items():
            if not hasattr(self, k):
                raise AttributeError(k)
            setattr(self, k, v)
        self.version += 1

    def adopt(self, other: "ClusterView") -> bool:
        """Take ``other``'s contents if it is newer. Returns True on change."""
        if other.version <= self.version:
            return False
        for k, v in vars(other).items():
            setattr(self, k, v)
        return True

    def copy(self) -> "ClusterView":
        return replace(self, addresses=dict(self.addresses))
