"""Simplified pose graph and its weighted spanning-tree (D-optimality) measure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DisconnectedGraph, TooLarge
from .gridworld import Pose2D

SINGULAR_TOL = 1e-9


@dataclass
class PoseGraph:
    """Robot poses joined by positively weighted edges.

    ``add_odometry_node`` and ``try_loop_closure`` mutate the graph in place and
    return it, since a mission appends one node per tick.
    """

    nodes: list[Pose2D] = field(default_factory=list)
    edges: list[tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        self._pairs = set()
        for i, j, w in self.edges:
            self._check_edge(i, j, w)
            self._pairs.add((min(i, j), max(i, j)))

    def _check_edge(self, i: int, j: int, w: float) -> None:
        if i == j:
            raise ValueError("self-loops are not allowed")
        if not w > 0:
            raise ValueError(f"edge weight must be positive, got {w}")
        if not (0 <= i < len(self.nodes) and 0 <= j < len(self.nodes)):
            raise IndexError(f"edge ({i}, {j}) references a missing node")

    @classmethod
    def from_spawn(cls, pose: Pose2D) -> "PoseGraph":
        return cls(nodes=[pose])

    def __len__(self) -> int:
        return len(self.nodes)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._pairs

    def add_edge(self, i: int, j: int, weight: float) -> "PoseGraph":
        self._check_edge(i, j, weight)
        key = (min(i, j), max(i, j))
        if key in self._pairs:
            raise ValueError(f"duplicate edge {key}")
        self._pairs.add(key)
        self.edges.append((i, j, float(weight)))
        return self

    def copy(self) -> "PoseGraph":
        return PoseGraph(list(self.nodes), list(self.edges))

    def is_connected(self) -> bool:
        n = len(self.nodes)
        if n == 0:
            return False
        adj = [[] for _ in range(n)]
        for i, j, _ in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == n

    def laplacian(self) -> np.ndarray:
        n = len(self.nodes)
        L = np.zeros((n, n))
        for i, j, w in self.edges:
            L[i, i] += w
            L[j, j] += w
            L[i, j] -= w
            L[j, i] -= w
        return L

    def to_text(self) -> str:
        """Plain edge-list dump: ``v i x y theta`` node lines then ``e i j w`` edges."""
        out = [f"v {k} {p.x!r} {p.y!r} {p.theta!r}" for k, p in enumerate(self.nodes)]
        out += [f"e {i} {j} {w!r}" for i, j, w in self.edges]
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PoseGraph":
        nodes, edges = [], []
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                nodes.append(Pose2D(float(parts[2]), float(parts[3]), float(parts[4])))
            elif parts[0] == "e":
                edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
        return cls(nodes, edges)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


def add_odometry_node(g: PoseGraph, pose: Pose2D, weight: float) -> PoseGraph:
    if not g.nodes:
        raise ValueError("pose graph needs a spawn node first")
    if not weight > 0:
        raise ValueError(f"odometry weight must be positive, got {weight}")
    g.nodes.append(pose)
    return g.add_edge(len(g.nodes) - 2, len(g.nodes) - 1, weight)


def try_loop_closure(g: PoseGraph, radius: float, weight: float, min_gap: int = 10) -> PoseGraph:
    """Link the newest node to the nearest earlier node within ``radius``.

    Only nodes at least ``min_gap`` steps back along the chain qualify, so a
    slowly moving robot does not close loops with its own recent trail.  If the
    nearest candidate is already linked, nothing is added (repeat calls are no-ops).
    """
    n = len(g.nodes)
    if n < 2:
        return g
    new = n - 1
    p = g.nodes[new]
    best, best_d = None, math.inf
    for k in range(0, new - max(min_gap, 2) + 1):
        q = g.nodes[k]
        d = math.hypot(q.x - p.x, q.y - p.y)
        if d <= radius and d < best_d:
            best, best_d = k, d
    if best is not None and not g.has_edge(best, new):
        g.add_edge(best, new, weight)
    return g


def log_spanning_tree_weight(g: PoseGraph) -> float:
    """log of the weighted spanning-tree count (Kirchhoff's theorem).

    Computed as log det of the Laplacian with node 0 removed, via Cholesky.
    """
    if len(g.nodes) < 2:
        raise ValueError("need at least two nodes")
    if not g.is_connected():
        raise DisconnectedGraph("pose graph is not connected")
    reduced = g.laplacian()[1:, 1:]
    try:
        chol = np.linalg.cholesky(reduced)
    except np.linalg.LinAlgError as exc:
        raise DisconnectedGraph("reduced Laplacian is not positive definite") from exc
    diag = np.diag(chol)
    if np.min(diag) ** 2 <= SINGULAR_TOL:
        raise DisconnectedGraph("reduced Laplacian is numerically singular")
    return float(2.0 * np.sum(np.log(diag)))


def uncertainty_term(g: PoseGraph) -> float:
    """Per-edge-normalised log tree weight; 0 for graphs with fewer than two nodes."""
    if len(g.nodes) < 2:
        return 0.0
    return log_spanning_tree_weight(g) / (len(g.nodes) - 1)


MAX_BRUTE_NODES = 10


def brute_force_spanning_trees(g: PoseGraph) -> float:
    """Sum over all spanning trees of the product of edge weights, by enumeration."""
    n = len(g.nodes)
    if n > MAX_BRUTE_NODES:
        raise TooLarge(f"{n} nodes exceeds the enumeration limit of {MAX_BRUTE_NODES}")
    if n <= 1:
        return 1.0
    edges = list(g.edges)
    m = len(edges)
    total = 0.0

    def find(parent, a):
        while parent[a] != a:
            a = parent[a]
        return a

    def walk(idx, parent, used, prod):
        nonlocal total
        if used == n - 1:
            total += prod
            return
        if m - idx < n - 1 - used:
            return
        i, j, w = edges[idx]
        ri, rj = find(parent, i), find(parent, j)
        if ri != rj:
            merged = list(parent)
            merged[ri] = rj
            walk(idx + 1, merged, used + 1, prod * w)
        walk(idx + 1, parent, used, prod)

    walk(0, list(range(n)), 0, 1.0)
    return total
