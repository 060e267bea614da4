import itertools

import numpy as np
import pytest

from flowseg.assignment import hungarian, mask_cost, match_masks
from flowseg.errors import DimensionMismatch
from flowseg.flow_io import BinaryMask


def brute_force_min_cost(cost: np.ndarray) -> float:
    """Exhaustive minimum over all maximal injective assignments."""
    k, s = cost.shape
    best = np.inf
    if k <= s:
        for perm in itertools.permutations(range(s), k):
            best = min(best, sum(cost[i, perm[i]] for i in range(k)))
    else:
        for perm in itertools.permutations(range(k), s):
            best = min(best, sum(cost[perm[j], j] for j in range(s)))
    return best


class TestMaskCost:
    def test_identical_masks_cost_zero(self):
        m = np.zeros((4, 4))
        m[1:3, 1:3] = 1.0
        assert mask_cost(m, BinaryMask(m > 0)) == 0.0

    def test_disjoint_masks_cost_one(self):
        a = np.zeros((4, 4))
        a[0, 0] = 1.0
        b = np.zeros((4, 4), dtype=bool)
        b[3, 3] = True
        assert mask_cost(a, BinaryMask(b)) == 1.0

    def test_half_confidence_soft_iou(self):
        m = np.full((3, 3), 0.5)
        p = BinaryMask(np.ones((3, 3), dtype=bool))
        assert mask_cost(m, p) == pytest.approx(0.5)

    def test_two_empty_masks_perfect(self):
        assert mask_cost(np.zeros((2, 2)), BinaryMask(np.zeros((2, 2), dtype=bool))) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mask_cost(np.zeros((2, 2)), BinaryMask(np.zeros((3, 3), dtype=bool)))


class TestHungarian:
    def test_identity_favoring_matrix(self):
        cost = np.ones((4, 4)) - np.eye(4)
        result = hungarian(cost)
        assert result.pairs == ((0, 0), (1, 1), (2, 2), (3, 3))
        assert result.total_cost == 0.0
        assert result.unmatched_slots == ()

    def test_3x3_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            cost = rng.normal(0, 5, (3, 3))
            result = hungarian(cost)
            assert result.total_cost == pytest.approx(brute_force_min_cost(cost), abs=1e-9)

    def test_rectangular_cardinality(self):
        result = hungarian(np.ones((5, 2)))
        assert len(result.pairs) == 2
        assert len(result.unmatched_slots) == 3
        matched = {s for s, _ in result.pairs}
        assert matched.isdisjoint(result.unmatched_slots)
        assert matched | set(result.unmatched_slots) == set(range(5))

    def test_optimal_for_all_shapes_up_to_5(self):
        rng = np.random.default_rng(1)
        for k in range(1, 6):
            for s in range(1, 6):
                for _ in range(5):
                    cost = rng.normal(0, 1, (k, s))
                    result = hungarian(cost)
                    assert len(result.pairs) == min(k, s)
                    assert result.total_cost == pytest.approx(brute_force_min_cost(cost), abs=1e-9)

    def test_row_constant_shift_keeps_assignment(self):
        rng = np.random.default_rng(2)
        cost = rng.normal(0, 1, (4, 4))
        base = hungarian(cost)
        shifted = cost.copy()
        shifted[2, :] += 17.5
        assert hungarian(shifted).pairs == base.pairs

    def test_uniform_ties_pick_lexicographic(self):
        assert hungarian(np.zeros((3, 3))).pairs == ((0, 0), (1, 1), (2, 2))
        assert hungarian(np.ones((5, 2))).pairs == ((0, 0), (1, 1))

    def test_tie_refinement_prefers_smallest_pair_list(self):
        # Two optimal assignments with equal total; (0,1)+(1,0) ties (0,0)+(1,1).
        cost = np.array([[1.0, 1.0], [1.0, 1.0]])
        assert hungarian(cost).pairs == ((0, 0), (1, 1))
        # Structured tie: both diagonals sum to 4.
        cost = np.array([[1.0, 3.0], [1.0, 3.0]])
        assert hungarian(cost).pairs == ((0, 0), (1, 1))

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        cost = rng.normal(0, 1, (6, 4))
        assert hungarian(cost) == hungarian(cost)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            hungarian(np.array([[np.inf, 1.0]]))


class TestMatchMasks:
    def test_matches_distinct_regions(self):
        masks = np.zeros((3, 6, 6))
        masks[0, :3, :3] = 0.9
        masks[1, 3:, 3:] = 0.9
        masks[2, :, :] = 0.01
        inst_a = np.zeros((6, 6), dtype=bool)
        inst_a[3:, 3:] = True
        inst_b = np.zeros((6, 6), dtype=bool)
        inst_b[:3, :3] = True
        result = match_masks(masks, [BinaryMask(inst_a), BinaryMask(inst_b)])
        assert set(result.pairs) == {(0, 1), (1, 0)}
        assert result.unmatched_slots == (2,)
