import numpy as np
import pytest

from flowseg.errors import NonFinite
from flowseg_bindings import (
    as_array_view,
    config_defaults,
    py_evaluate,
    py_is_quasi_static,
    py_pseudo_label,
)


def mover_flow(h=64, w=96, boxes=((8, 8, 14, 12, 7.0, 0.0),), sigma=0.0, seed=0):
    """2 x H x W flow with rectangular movers (x, y, w, h, u, v)."""
    flow = np.zeros((2, h, w), dtype=np.float32)
    for x, y, bw, bh, u, v in boxes:
        flow[0, y : y + bh, x : x + bw] = u
        flow[1, y : y + bh, x : x + bw] = v
    if sigma:
        rng = np.random.default_rng(seed)
        flow += rng.normal(0, sigma, flow.shape).astype(np.float32)
    return flow


class TestArrayView:
    def test_zero_copy_when_aligned(self):
        arr = np.zeros((2, 4, 4), dtype=np.float32)
        view = as_array_view(arr, np.float32, 3)
        assert not view.copied
        assert view.data is arr

    def test_copies_on_dtype_mismatch(self):
        arr = np.zeros((2, 4, 4), dtype=np.float64)
        view = as_array_view(arr, np.float32, 3)
        assert view.copied

    def test_copies_on_non_contiguous(self):
        arr = np.zeros((2, 8, 8), dtype=np.float32)[:, ::2, ::2]
        view = as_array_view(arr, np.float32, 3)
        assert view.copied
        assert view.data.flags.c_contiguous


class TestPseudoLabel:
    def test_zero_flow_s0(self):
        labels, fg, s = py_pseudo_label(np.zeros((2, 32, 32), dtype=np.float32))
        assert s == 0
        assert not labels.any() and not fg.any()

    def test_three_movers(self):
        flow = mover_flow(
            boxes=(
                (5, 5, 14, 12, 8.0, 0.0),
                (60, 40, 16, 14, 0.0, -6.0),
                (40, 8, 12, 12, -5.0, 5.0),
            )
        )
        labels, fg, s = py_pseudo_label(flow)
        assert s == 3
        assert set(np.unique(labels)) == {0, 1, 2, 3}
        assert ((labels > 0) <= fg).all()

    def test_nan_input_raises(self):
        flow = np.zeros((2, 16, 16), dtype=np.float32)
        flow[0, 3, 3] = np.nan
        with pytest.raises(NonFinite):
            py_pseudo_label(flow)

    def test_unknown_config_key_rejected(self):
        with pytest.raises(KeyError):
            py_pseudo_label(np.zeros((2, 8, 8), dtype=np.float32), {"tau_fgg": 1.0})

    def test_config_keys_apply(self):
        flow = mover_flow(boxes=((8, 8, 14, 12, 3.0, 0.0),))
        _, _, s_default = py_pseudo_label(flow)  # tau_fg 2.5 < 3
        _, _, s_high = py_pseudo_label(flow, {"tau_fg": 3.5})
        assert s_default == 1 and s_high == 0

    def test_wrong_shape(self):
        with pytest.raises(ValueError):
            py_pseudo_label(np.zeros((3, 8, 8), dtype=np.float32))


class TestQuasiStatic:
    def test_static_frame(self):
        assert py_is_quasi_static(mover_flow())

    def test_panning_frame(self):
        flow = np.full((2, 48, 64), 2.0, dtype=np.float32)
        assert not py_is_quasi_static(flow)

    def test_threshold_from_config(self):
        flow = np.full((2, 48, 64), 1.0, dtype=np.float32)
        flow[1] = 0.0
        assert not py_is_quasi_static(flow)
        assert py_is_quasi_static(flow, {"tau_static": 1.7})


class TestEvaluate:
    def test_identical_maps(self):
        labels = np.zeros((16, 16), dtype=np.int32)
        labels[2:6, 2:6] = 1
        labels[9:14, 9:14] = 2
        result = py_evaluate(labels, labels)
        assert result["f1_50"] == 1.0 and result["tp"] == 2
        assert result["fg_ari"] == pytest.approx(1.0)
        assert result["all_ari"] == pytest.approx(1.0)

    def test_half_found(self):
        gt = np.zeros((8, 8), dtype=np.int32)
        gt[0:3, 0:3] = 1
        gt[5:8, 5:8] = 2
        pred = np.zeros((8, 8), dtype=np.int32)
        pred[0:3, 0:3] = 7  # non-contiguous IDs are normalized at the boundary
        result = py_evaluate(pred, gt)
        assert result["ap_50"] == 1.0 and result["ar_50"] == 0.5
        assert result["f1_50"] == pytest.approx(2 / 3)

    def test_no_foreground_fg_ari_none(self):
        zeros = np.zeros((4, 4), dtype=np.int32)
        assert py_evaluate(zeros, zeros)["fg_ari"] is None


class TestConfigDefaults:
    def test_mirrors_run_config(self):
        from flowseg import RunConfig

        defaults = config_defaults()
        assert defaults == dict(RunConfig().__dict__)
        defaults["tau_fg"] = 99.0  # a copy, not a live view
        assert config_defaults()["tau_fg"] == 2.5
