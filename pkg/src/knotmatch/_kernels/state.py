"""Structure-of-arrays particle state shared by both kernel backends.

Per particle: edge membership per node (``edge_of``, -1 while uncovered),
visited flags, and an edge table (member list, size, visited-member count).
Edges only ever gain members, so slots are append-only; ``n_sing`` counts
singleton edges for the parent-count case split.
"""
from __future__ import annotations

import numpy as np


class ParticleState:
    __slots__ = ("edge_of", "visited", "edge_nodes", "edge_size", "edge_nvis",
                 "n_edges", "n_sing", "n_nodes", "n_particles")

    def __init__(self, n_particles: int, n_nodes: int):
        N, n = int(n_particles), int(n_nodes)
        self.n_particles = N
        self.n_nodes = n
        self.edge_of = np.full((N, n), -1, dtype=np.int16)
        self.visited = np.zeros((N, n), dtype=np.uint8)
        self.edge_nodes = np.full((N, n, 3), -1, dtype=np.int16)
        self.edge_size = np.zeros((N, n), dtype=np.int8)
        self.edge_nvis = np.zeros((N, n), dtype=np.int8)
        self.n_edges = np.zeros(N, dtype=np.int16)
        self.n_sing = np.zeros(N, dtype=np.int16)

    def take(self, idx: np.ndarray) -> None:
        """Resample in place: particle i becomes a copy of particle idx[i]."""
        self.edge_of = np.ascontiguousarray(self.edge_of[idx])
        self.visited = np.ascontiguousarray(self.visited[idx])
        self.edge_nodes = np.ascontiguousarray(self.edge_nodes[idx])
        self.edge_size = np.ascontiguousarray(self.edge_size[idx])
        self.edge_nvis = np.ascontiguousarray(self.edge_nvis[idx])
        self.n_edges = np.ascontiguousarray(self.n_edges[idx])
        self.n_sing = np.ascontiguousarray(self.n_sing[idx])

    def canonical_labels(self) -> np.ndarray:
        """(N, n) matrix where each node carries the smallest node id of its edge.

        Two particles hold the same matching iff their rows are equal, which
        makes matching aggregation a vectorized ``np.unique`` over rows.
        """
        N, n = self.edge_of.shape
        flat = (np.arange(N, dtype=np.int64)[:, None] * n + self.edge_of.astype(np.int64))
        mins = np.full(N * n, np.iinfo(np.int16).max, dtype=np.int16)
        nodes = np.broadcast_to(np.arange(n, dtype=np.int16), (N, n))
        covered = self.edge_of >= 0
        np.minimum.at(mins, flat[covered], nodes[covered])
        labels = np.full((N, n), -1, dtype=np.int16)
        labels[covered] = mins[flat[covered]]
        return labels

    def matching_of(self, i: int) -> frozenset:
        """The matching of particle i as a frozenset of frozensets."""
        edges = []
        for e in range(int(self.n_edges[i])):
            sz = int(self.edge_size[i, e])
            edges.append(frozenset(int(x) for x in self.edge_nodes[i, e, :sz]))
        return frozenset(edges)
