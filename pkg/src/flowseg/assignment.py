"""Optimal bipartite matching of slot masks to pseudo-instance masks.

The solver is a shortest-augmenting-path Hungarian method (Jonker-Volgenant
style) with an exact lexicographic tie-break: among equal-total-cost optimal
assignments, the returned pair list, sorted by slot index, is the smallest.
Tie detection uses complementary slackness (only reduced-cost-zero edges can
appear in an optimal assignment), so the refinement stays cheap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .flow_io import BinaryMask

_TIE_EPS = 1e-9


@dataclass(frozen=True)
class MatchResult:
    """Injective slot-to-instance assignment; |pairs| = min(K, S)."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_slots: tuple[int, ...]
    total_cost: float

    def matched_slots(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.pairs)

    def instance_of(self, slot: int) -> int | None:
        for s, j in self.pairs:
            if s == slot:
                return j
        return None


def mask_cost(slot_mask: np.ndarray, instance_mask: BinaryMask) -> float:
    """1 - soft IoU between a [0,1] slot mask and a binary instance mask.

    Soft IoU is sum(min(m,p)) / sum(max(m,p)); two empty masks count as a
    perfect match (IoU 1, cost 0).
    """
    m = np.asarray(slot_mask, dtype=np.float64)
    p = np.asarray(instance_mask.data, dtype=np.float64)
    if m.shape != p.shape:
        raise DimensionMismatch(f"slot mask {m.shape} vs instance mask {p.shape}")
    inter = np.minimum(m, p).sum()
    union = np.maximum(m, p).sum()
    if union == 0.0:
        return 0.0
    return float(1.0 - inter / union)


def _solve(cost: np.ndarray) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    """Row-perfect min-cost matching for an R x C matrix with R <= C.

    Returns (col_of_row, total, row_potentials, col_potentials). Ties inside
    the Dijkstra scans resolve to the lowest column index, making the result
    deterministic.
    """
    r, c = cost.shape
    u = np.zeros(r + 1)
    v = np.zeros(c + 1)
    row_of = np.zeros(c + 1, dtype=np.int64)  # 1-based; 0 = free
    way = np.zeros(c + 1, dtype=np.int64)
    for i in range(1, r + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(c + 1, np.inf)
        used = np.zeros(c + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            better = ~used[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(used[1:], np.inf, minv[1:])
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    col_of = np.full(r, -1, dtype=np.int64)
    for j in range(1, c + 1):
        if row_of[j] != 0:
            col_of[row_of[j] - 1] = j - 1
    total = float(cost[np.arange(r), col_of].sum())
    return col_of, total, u[1:], v[1:]


def _optimal_value(cost: np.ndarray) -> float:
    if cost.shape[0] == 0 or cost.shape[1] == 0:
        return 0.0
    if cost.shape[0] <= cost.shape[1]:
        return _solve(cost)[1]
    return _solve(cost.T)[1]


def hungarian(costs: np.ndarray) -> MatchResult:
    """Minimum-cost assignment; rectangular inputs leave |K-S| slots unmatched."""
    cost = np.asarray(costs, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] < 1 or cost.shape[1] < 1:
        raise DimensionMismatch(f"cost matrix must be K x S with K,S >= 1, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains NaN or Inf")
    k, s = cost.shape
    need = min(k, s)
    if k <= s:
        _, total, pu, pv = _solve(cost)
        reduced = cost - pu[:, None] - pv[None, :]
    else:
        _, total, pu, pv = _solve(cost.T)
        reduced = cost - pv[:, None] - pu[None, :]
    scale = max(1.0, float(np.abs(cost).max()))
    tol = _TIE_EPS * max(scale, abs(total))
    # Complementary slackness: only reduced-cost-zero edges can appear in an
    # optimal assignment, so they are the only tie candidates worth probing.
    tight = np.abs(reduced) <= tol

    # Fix pairs greedily in slot order; a candidate stands iff an optimal
    # completion of the residual problem still reaches the optimal total.
    pairs: list[tuple[int, int]] = []
    cols = list(range(s))
    remaining = total
    for slot in range(k):
        if len(pairs) == need:
            break
        rows_after = np.arange(slot + 1, k)
        matched_j = -1
        for j in cols:
            if not tight[slot, j]:
                continue
            sub = cost[np.ix_(rows_after, [x for x in cols if x != j])]
            completion = _optimal_value(sub) if min(sub.shape) > 0 else 0.0
            if abs(cost[slot, j] + completion - remaining) <= tol:
                matched_j = j
                break
        if matched_j >= 0:
            pairs.append((slot, matched_j))
            cols.remove(matched_j)
            remaining -= cost[slot, matched_j]
        # else: this slot stays unmatched in every optimal assignment that
        # extends the prefix; possible only when K > S.

    matched = {p[0] for p in pairs}
    unmatched = tuple(i for i in range(k) if i not in matched)
    achieved = float(sum(cost[i, j] for i, j in pairs))
    return MatchResult(pairs=tuple(pairs), unmatched_slots=unmatched, total_cost=achieved)


def match_masks(slot_masks: np.ndarray, instances: list[BinaryMask]) -> MatchResult:
    """Hungarian matching of K x H x W slot masks against instance masks."""
    k = slot_masks.shape[0]
    cost = np.empty((k, len(instances)), dtype=np.float64)
    for i in range(k):
        for j, inst in enumerate(instances):
            cost[i, j] = mask_cost(slot_masks[i], inst)
    return hungarian(cost)
