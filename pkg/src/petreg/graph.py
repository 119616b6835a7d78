"""Leader-follower communication graph.

Node 0 is the leader and followers are numbered 1..N.  Internally the
follower adjacency is a 0-indexed ``N x N`` array where ``adjacency[i, j] = 1``
means follower ``i+1`` receives from follower ``j+1``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GraphError


@dataclass(frozen=True)
class CommGraph:
    adjacency: np.ndarray
    pinning: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float, ndmin=2)
        pin = np.array(self.pinning, dtype=float).reshape(-1)
        n = pin.size
        if n < 1:
            raise ConfigError("graph needs at least one follower")
        if adj.shape != (n, n):
            raise ConfigError(f"adjacency must be {n}x{n}, got {adj.shape}")
        if not np.all(np.isin(adj, (0.0, 1.0))) or not np.all(np.isin(pin, (0.0, 1.0))):
            raise ConfigError("graph weights must be 0 or 1")
        if np.any(np.diag(adj) != 0.0):
            raise ConfigError("self loops are not allowed (a_ii must be 0)")
        if not np.any(pin == 1.0):
            raise GraphError("at least one follower must be pinned to the leader", range(1, n + 1))
        adj.setflags(write=False)
        pin.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "pinning", pin)

    @property
    def n_followers(self) -> int:
        return self.pinning.size

    @classmethod
    def from_edges(cls, n_followers: int, edges, pinned) -> "CommGraph":
        """Build from ``(sender, receiver)`` pairs using 1-based follower ids.

        ``pinned`` lists the followers that hear the leader directly.
        """
        adj = np.zeros((n_followers, n_followers))
        for sender, receiver in edges:
            if not (1 <= sender <= n_followers and 1 <= receiver <= n_followers):
                raise ConfigError(f"edge ({sender}, {receiver}) references an unknown follower")
            adj[receiver - 1, sender - 1] = 1.0
        pin = np.zeros(n_followers)
        for i in pinned:
            if not 1 <= i <= n_followers:
                raise ConfigError(f"pinned follower {i} does not exist")
            pin[i - 1] = 1.0
        return cls(adj, pin)

    @classmethod
    def chain(cls, n_followers: int) -> "CommGraph":
        """Leader -> 1 -> 2 -> ... -> N."""
        return cls.from_edges(n_followers, [(i, i + 1) for i in range(1, n_followers)], [1])

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.adjacency)
        return sorted((int(j) + 1, int(i) + 1) for i, j in zip(rows, cols))

    def pinned(self) -> list[int]:
        return [int(i) + 1 for i in np.nonzero(self.pinning)[0]]


def laplacian(g: CommGraph) -> np.ndarray:
    return np.diag(g.adjacency.sum(axis=1)) - g.adjacency


def h_matrix(g: CommGraph) -> np.ndarray:
    """``H = L + diag(a_10, ..., a_N0)``."""
    return laplacian(g) + np.diag(g.pinning)


def unreachable_followers(g: CommGraph) -> list[int]:
    """Followers (1-based) with no directed path from the leader."""
    n = g.n_followers
    seen = np.zeros(n, dtype=bool)
    queue = deque(int(i) for i in np.nonzero(g.pinning)[0])
    for i in queue:
        seen[i] = True
    while queue:
        j = queue.popleft()
        # followers that receive from j
        for i in np.nonzero(g.adjacency[:, j])[0]:
            if not seen[i]:
                seen[i] = True
                queue.append(int(i))
    return [int(i) + 1 for i in np.nonzero(~seen)[0]]


def has_leader_spanning_tree(g: CommGraph) -> bool:
    return not unreachable_followers(g)
