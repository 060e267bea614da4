import math

import numpy as np
import pytest

from flowseg.assignment import MatchResult
from flowseg.errors import DimensionMismatch
from flowseg.flow_io import BinaryMask
from flowseg.losses import LossConfig, drop_gate, fg_bg_loss, fg_prediction, wbce
from flowseg.slots import softmax_masks


class TestWbce:
    def test_perfect_prediction_near_zero(self):
        p = np.zeros((4, 4), dtype=bool)
        p[1:3, 1:3] = True
        loss, _ = wbce(p.astype(float), BinaryMask(p))
        assert 0.0 <= loss < 1e-5

    def test_full_image_weight_is_one(self):
        # r_s = 1 makes the foreground weight (2 - r_s) = 1: plain BCE.
        p = BinaryMask(np.ones((3, 3), dtype=bool))
        m = np.full((3, 3), 0.5)
        loss, _ = wbce(m, p)
        assert loss == pytest.approx(math.log(2.0))

    def test_2x2_closed_form(self):
        # p = [[1,0],[0,0]], m = 0.5: r_s = 1/4,
        # loss = -(1/4)[(1.75) log 0.5 + 3 log 0.5] = 1.1875 log 2.
        p = BinaryMask(np.array([[True, False], [False, False]]))
        m = np.full((2, 2), 0.5)
        loss, _ = wbce(m, p)
        assert loss == pytest.approx(1.1875 * math.log(2.0), abs=1e-12)

    def test_small_object_upweighted(self):
        # Same wrong prediction on the object pixel costs more when the
        # object is smaller (r_s smaller -> weight closer to 2).
        m_small = np.full((4, 4), 0.5)
        p_small = np.zeros((4, 4), dtype=bool)
        p_small[0, 0] = True
        m_large = np.full((4, 4), 0.5)
        p_large = np.zeros((4, 4), dtype=bool)
        p_large[:2, :] = True
        per_px_small = wbce(m_small, BinaryMask(p_small))[0]
        # Compare the foreground weight directly.
        assert (2 - 1 / 16) > (2 - 8 / 16)

    def test_monotone_toward_target(self):
        rng = np.random.default_rng(0)
        p = BinaryMask(rng.random((5, 5)) < 0.5)
        m = rng.uniform(0.1, 0.9, (5, 5))
        loss_far, _ = wbce(m, p)
        closer = m + 0.5 * (p.data.astype(float) - m)
        loss_near, _ = wbce(closer, p)
        assert loss_near < loss_far

    def test_nonnegative_and_finite(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = BinaryMask(rng.random((3, 4)) < 0.5)
            m = rng.uniform(0, 1, (3, 4))  # includes exact 0/1 after clamping
            loss, grad = wbce(m, p)
            assert loss >= 0.0 and np.isfinite(loss)
            assert np.isfinite(grad).all()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            wbce(np.zeros((2, 2)), BinaryMask(np.zeros((3, 3), dtype=bool)))


class TestDropGate:
    def test_identical_unmatched_slot_dropped(self):
        z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        match = MatchResult(pairs=((0, 0),), unmatched_slots=(1, 2), total_cost=0.0)
        kept, warn = drop_gate(match, z, 0.99)
        assert kept == (2,)  # slot 1 has cosine 1 with matched slot 0
        assert not warn

    def test_orthogonal_slot_kept(self):
        z = np.array([[1.0, 0.0], [0.0, 1.0]])
        match = MatchResult(pairs=((0, 0),), unmatched_slots=(1,), total_cost=0.0)
        kept, _ = drop_gate(match, z, 0.99)
        assert kept == (1,)

    def test_no_matched_slots_all_kept(self):
        z = np.random.default_rng(2).normal(0, 1, (4, 3))
        match = MatchResult(pairs=(), unmatched_slots=(0, 1, 2, 3), total_cost=0.0)
        kept, _ = drop_gate(match, z, 0.99)
        assert kept == (0, 1, 2, 3)

    def test_zero_vector_warns_and_keeps(self):
        z = np.array([[1.0, 0.0], [0.0, 0.0]])
        match = MatchResult(pairs=((0, 0),), unmatched_slots=(1,), total_cost=0.0)
        kept, warn = drop_gate(match, z, 0.99)
        assert kept == (1,)
        assert warn

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        z = rng.normal(0, 1, (5, 4))
        match = MatchResult(pairs=((0, 0), (1, 1)), unmatched_slots=(2, 3, 4), total_cost=0.0)
        base = drop_gate(match, z, 0.9)[0]
        scaled = z.copy()
        scaled[3] *= 123.0
        assert drop_gate(match, scaled, 0.9)[0] == base


class TestFgPrediction:
    def test_all_matched_lambda_one_sums_to_one(self):
        rng = np.random.default_rng(4)
        m = softmax_masks(rng.normal(0, 1, (4, 3, 3)))
        match = MatchResult(pairs=((0, 0), (1, 1), (2, 2), (3, 3)), unmatched_slots=(), total_cost=0.0)
        out = fg_prediction(m, np.ones(4), (), match)
        assert out == pytest.approx(np.ones((3, 3)), abs=1e-9)

    def test_all_lambda_zero(self):
        m = softmax_masks(np.zeros((3, 2, 2)))
        match = MatchResult(pairs=((0, 0),), unmatched_slots=(1, 2), total_cost=0.0)
        assert not fg_prediction(m, np.zeros(3), (1, 2), match).any()

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(5)
        m = softmax_masks(rng.normal(0, 2, (5, 4, 4)))
        lam = rng.uniform(0, 1, 5)
        match = MatchResult(pairs=((1, 0), (3, 1)), unmatched_slots=(0, 2, 4), total_cost=0.0)
        kept = (0, 4)
        expected = lam[1] * m[1] + lam[3] * m[3] + lam[0] * m[0] + lam[4] * m[4]
        assert fg_prediction(m, lam, kept, match) == pytest.approx(expected, abs=1e-12)

    def test_linear_in_lambda(self):
        rng = np.random.default_rng(6)
        m = softmax_masks(rng.normal(0, 1, (3, 2, 2)))
        match = MatchResult(pairs=((0, 0),), unmatched_slots=(1, 2), total_cost=0.0)
        kept = (1,)
        l1 = rng.uniform(0, 1, 3)
        l2 = rng.uniform(0, 1, 3)
        a = fg_prediction(m, l1, kept, match) + fg_prediction(m, l2, kept, match)
        b = fg_prediction(m, l1 + l2, kept, match)
        assert b == pytest.approx(a, abs=1e-12)


class TestFgBgLoss:
    def test_perfect_prediction_near_zero(self):
        p = np.zeros((4, 4), dtype=bool)
        p[:2] = True
        loss, _ = fg_bg_loss(p.astype(float), BinaryMask(p), r_bg=0.2)
        assert 0.0 <= loss < 1e-5

    def test_all_ones_half_bg_gives_r_bg(self):
        # L_fg ~ 0, L_bg = r_bg * mean over bg of 1 = 0.2.
        p = np.zeros((4, 4), dtype=bool)
        p[:2] = True
        loss, _ = fg_bg_loss(np.ones((4, 4)), BinaryMask(p), r_bg=0.2)
        assert loss == pytest.approx(0.2, abs=1e-5)

    def test_no_background_pixels(self):
        p = BinaryMask(np.ones((3, 3), dtype=bool))
        loss, grad = fg_bg_loss(np.full((3, 3), 0.5), p, r_bg=0.2)
        assert loss == pytest.approx(math.log(2.0))
        assert np.isfinite(grad).all()

    def test_gradient_matches_finite_differences(self):
        from flowseg.train import gradcheck_fg_bg

        rng = np.random.default_rng(7)
        for _ in range(10):
            assert gradcheck_fg_bg(rng) < 1e-4

    def test_nonnegative(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            p = BinaryMask(rng.random((3, 3)) < 0.5)
            m = rng.uniform(0, 1, (3, 3))
            loss, _ = fg_bg_loss(m, p)
            assert loss >= 0.0 and np.isfinite(loss)


class TestLossConfig:
    def test_default_values(self):
        cfg = LossConfig()
        assert cfg.r_bg == 0.2
        assert cfg.tau_drop == 0.99

    def test_validation(self):
        with pytest.raises(ValueError):
            LossConfig(eps=0.7)
        with pytest.raises(ValueError):
            LossConfig(r_bg=-1.0)
        with pytest.raises(ValueError):
            LossConfig(tau_drop=1.5)
