"""Finite balls of the d-regular tree, stored as parent arrays in BFS order."""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

DEFAULT_VERTEX_CAP = 10_000_000


def ball_size(d: int, radius: int) -> int:
    """Number of vertices within distance ``radius`` of a vertex of T_d."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return 1 + d * sum((d - 1) ** j for j in range(radius))


@dataclass(frozen=True)
class RootedTree:
    """Rooted tree fragment; vertex 0 is the root and indices follow BFS order."""

    parent: np.ndarray
    depth: np.ndarray
    degree: int
    children: tuple = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.parent)

    def neighbors(self, v: int) -> list:
        p = int(self.parent[v])
        out = [] if p < 0 else [p]
        out.extend(self.children[v])
        return out

    def distances_from(self, v: int) -> np.ndarray:
        dist = np.full(self.n_vertices, -1, dtype=np.int64)
        dist[v] = 0
        queue = deque([v])
        while queue:
            w = queue.popleft()
            for u in self.neighbors(w):
                if dist[u] < 0:
                    dist[u] = dist[w] + 1
                    queue.append(u)
        return dist

    def distance_matrix(self) -> np.ndarray:
        return np.stack([self.distances_from(v) for v in range(self.n_vertices)])

    def is_full(self, v: int) -> bool:
        """True when every one of the ``degree`` neighbours of v is present."""
        return len(self.neighbors(v)) == self.degree


def regular_ball(d: int, radius: int, vertex_cap: int = DEFAULT_VERTEX_CAP) -> RootedTree:
    """Ball of the given radius around a root vertex of T_d."""
    if d < 2:
        raise ValueError("degree must be at least 2")
    n = ball_size(d, radius)
    if n > vertex_cap:
        raise MemoryError(f"ball of radius {radius} in T_{d} has {n} vertices (cap {vertex_cap})")
    parent = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    children = [[] for _ in range(n)]
    nxt = 1
    for v in range(n):
        if depth[v] == radius:
            continue
        n_kids = d if v == 0 else d - 1
        for _ in range(n_kids):
            parent[nxt] = v
            depth[nxt] = depth[v] + 1
            children[v].append(nxt)
            nxt += 1
    return RootedTree(parent, depth, d, tuple(tuple(c) for c in children))
