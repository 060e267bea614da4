"""Hierarchical density-based clustering (HDBSCAN), implemented from scratch.

Pipeline: core distances -> mutual-reachability minimum spanning tree ->
single-linkage hierarchy -> condensed tree at ``min_cluster_size`` ->
excess-of-mass stability selection. Distance handling is dense O(n^2) by
design; inputs are pixel-sized point sets, not datasets.

Determinism: tie-breaking is by lower point index everywhere (Prim vertex
selection, edge ordering, label numbering), so results depend only on input
order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewPoints

NOISE = -1


@dataclass(frozen=True)
class HdbscanParams:
    min_cluster_size: int = 25
    min_samples: int = 10

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError(f"min_cluster_size must be >= 2, got {self.min_cluster_size}")
        if self.min_samples < 1:
            raise ValueError(f"min_samples must be >= 1, got {self.min_samples}")


@dataclass(frozen=True)
class ClusterAssignment:
    """Labels in -1 (noise), 0..C-1; stabilities indexed by cluster ID."""

    labels: np.ndarray
    stabilities: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(self.stabilities)


def _check_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError(f"points must be a non-empty n x d array, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("points contain NaN or Inf")
    return pts


def core_distances(points: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to each point's min_samples-th nearest neighbor (self excluded)."""
    pts = _check_points(points)
    n = pts.shape[0]
    if min_samples > n - 1:
        raise TooFewPoints(f"min_samples={min_samples} needs at least {min_samples + 1} points, got {n}")
    out = np.empty(n, dtype=np.float64)
    # Blocked so the full n x n matrix never materializes.
    block = 1024
    for start in range(0, n, block):
        rows = pts[start : start + block]
        d2 = ((rows[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        # Sorted-with-self index min_samples equals the min_samples-th
        # neighbor excluding self (self contributes the leading zero).
        out[start : start + block] = np.sqrt(np.partition(d2, min_samples, axis=1)[:, min_samples])
    return out


def mutual_reachability_mst(points: np.ndarray, core: np.ndarray) -> np.ndarray:
    """Minimum spanning tree under d_mreach(a,b) = max(core_a, core_b, ||a-b||).

    Prim's algorithm over the implicit dense graph; distance rows are computed
    on demand (O(n) memory). Returns an (n-1, 3) float array of
    (index_a, index_b, weight) in discovery order.
    """
    pts = _check_points(points)
    core = np.asarray(core, dtype=np.float64)
    n = pts.shape[0]
    if core.shape != (n,):
        raise ValueError(f"core distances shape {core.shape} does not match {n} points")
    if n == 1:
        return np.empty((0, 3), dtype=np.float64)

    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_from = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3), dtype=np.float64)

    current = 0
    in_tree[0] = True
    for k in range(n - 1):
        d = np.sqrt(((pts - pts[current]) ** 2).sum(axis=1))
        mreach = np.maximum(d, np.maximum(core, core[current]))
        better = mreach < best
        best_from[better] = current
        best = np.where(better, mreach, best)
        best[in_tree] = np.inf
        nxt = int(np.argmin(best))  # argmin takes the lowest index on ties
        edges[k] = (best_from[nxt], nxt, best[nxt])
        in_tree[nxt] = True
        best[nxt] = np.inf
        current = nxt
    return edges


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        self.parent[self.find(a)] = self.find(b)


def _single_linkage(mst: np.ndarray, n: int):
    """Dendrogram from MST edges: internal nodes n..2n-2 as (left, right, dist, size)."""
    order = sorted(
        range(n - 1),
        key=lambda e: (mst[e, 2], min(mst[e, 0], mst[e, 1]), max(mst[e, 0], mst[e, 1])),
    )
    uf = _UnionFind(2 * n - 1)
    node_of = list(range(n))  # union-find root -> current dendrogram node
    left = np.zeros(2 * n - 1, dtype=np.int64)
    right = np.zeros(2 * n - 1, dtype=np.int64)
    dist = np.zeros(2 * n - 1, dtype=np.float64)
    size = np.ones(2 * n - 1, dtype=np.int64)
    nxt = n
    for e in order:
        a, b, w = int(mst[e, 0]), int(mst[e, 1]), mst[e, 2]
        ra, rb = uf.find(a), uf.find(b)
        na, nb = node_of[ra], node_of[rb]
        left[nxt], right[nxt], dist[nxt] = na, nb, w
        size[nxt] = size[na] + size[nb]
        uf.union(ra, rb)
        node_of[uf.find(ra)] = nxt
        nxt += 1
    return left, right, dist, size


def _leaves_under(node: int, left, right, n: int) -> list[int]:
    out: list[int] = []
    stack = [node]
    while stack:
        x = stack.pop()
        if x < n:
            out.append(x)
        else:
            stack.append(int(left[x]))
            stack.append(int(right[x]))
    return out


def extract_clusters(mst: np.ndarray, min_cluster_size: int) -> ClusterAssignment:
    """Flat clusters from the mutual-reachability MST.

    Builds the single-linkage hierarchy, condenses it (splits count only when
    both sides reach ``min_cluster_size``), scores each condensed cluster by
    excess-of-mass stability, and keeps the most stable antichain. Unlike the
    usual library default, the root is an eligible candidate, so structureless
    data forms one cluster instead of dissolving into noise.
    """
    mst = np.asarray(mst, dtype=np.float64)
    n = mst.shape[0] + 1
    labels = np.full(n, NOISE, dtype=np.int64)
    if n < min_cluster_size:
        return ClusterAssignment(labels=labels, stabilities=np.empty(0))

    left, right, dist, size = _single_linkage(mst, n)
    root = 2 * n - 2

    # Condensed tree. Rows: (parent cluster, child id, lambda, size, child is point).
    birth = {0: 0.0}
    cluster_children: dict[int, list[int]] = {}
    cluster_parent: dict[int, int] = {}
    point_rows: list[tuple[int, int, float]] = []  # (cluster, point, lambda)
    cluster_rows: list[tuple[int, int, float, int]] = []  # (parent, child, lambda, size)
    next_cluster = 1
    stack = [(root, 0)]
    while stack:
        node, parent = stack.pop()
        lo, hi = int(left[node]), int(right[node])
        lam = np.inf if dist[node] == 0.0 else 1.0 / dist[node]
        big_lo, big_hi = size[lo] >= min_cluster_size, size[hi] >= min_cluster_size
        if big_lo and big_hi:
            for child in (lo, hi):
                c = next_cluster
                next_cluster += 1
                birth[c] = lam
                cluster_parent[c] = parent
                cluster_children.setdefault(parent, []).append(c)
                cluster_rows.append((parent, c, lam, int(size[child])))
                stack.append((child, c))
        else:
            for child, big in ((lo, big_lo), (hi, big_hi)):
                if big:
                    stack.append((child, parent))
                else:
                    for p in _leaves_under(child, left, right, n):
                        point_rows.append((parent, p, lam))

    stability = {c: 0.0 for c in birth}
    for parent, _p, lam in point_rows:
        stability[parent] += lam - birth[parent]
    for parent, _c, lam, sz in cluster_rows:
        stability[parent] += (lam - birth[parent]) * sz

    # Excess-of-mass: keep a cluster when its own stability is at least the
    # best total its descendants achieve.
    candidate: dict[int, bool] = {}
    subtree: dict[int, float] = {}
    for c in sorted(birth, reverse=True):
        kids = cluster_children.get(c, [])
        if not kids:
            candidate[c] = True
            subtree[c] = stability[c]
        elif stability[c] >= sum(subtree[k] for k in kids):
            candidate[c] = True
            subtree[c] = stability[c]
        else:
            candidate[c] = False
            subtree[c] = sum(subtree[k] for k in kids)

    selected: list[int] = []
    walk = [0]
    while walk:
        c = walk.pop()
        if candidate[c]:
            selected.append(c)
        else:
            walk.extend(cluster_children.get(c, []))
    selected_set = set(selected)

    exit_cluster = {p: c for c, p, _lam in point_rows}
    raw = np.full(n, -1, dtype=np.int64)
    for p in range(n):
        c: int | None = exit_cluster[p]
        while c is not None:
            if c in selected_set:
                raw[p] = c
                break
            c = cluster_parent.get(c)

    # Contiguous IDs ordered by each cluster's first point (input order).
    first_point = {}
    for p in range(n):
        if raw[p] >= 0 and raw[p] not in first_point:
            first_point[raw[p]] = p
    order = sorted(first_point, key=first_point.get)
    remap = {c: i for i, c in enumerate(order)}
    for p in range(n):
        if raw[p] >= 0:
            labels[p] = remap[raw[p]]
    stabilities = np.array([stability[c] for c in order], dtype=np.float64)
    return ClusterAssignment(labels=labels, stabilities=stabilities)


def hdbscan(points: np.ndarray, params: HdbscanParams) -> ClusterAssignment:
    """Full pipeline on an n x d point set."""
    pts = _check_points(points)
    n = pts.shape[0]
    if n < params.min_cluster_size or n <= params.min_samples:
        return ClusterAssignment(labels=np.full(n, NOISE, dtype=np.int64), stabilities=np.empty(0))
    core = core_distances(pts, params.min_samples)
    mst = mutual_reachability_mst(pts, core)
    return extract_clusters(mst, params.min_cluster_size)
