"""In-process bindings for training pipelines that consume pseudo-labels.

Thin wrappers over the flowseg library: arrays in, arrays out, no
reimplementation. Outputs are bit-identical to the CLI on the same inputs
(the flow payload is normalized to float32 exactly like the .flo loader).
All functions are pure; NumPy releases the interpreter lock inside its
kernels, so concurrent callers do not serialize on long computations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowseg import (
    FlowField,
    LabelMap,
    RunConfig,
    corner_stats,
    generate_pseudo_label,
    is_quasi_static,
)
from flowseg.metrics import evaluate_dataset, evaluate_pair

__version__ = "0.1.0"

__all__ = [
    "ArrayView",
    "as_array_view",
    "config_defaults",
    "py_evaluate",
    "py_evaluate_dataset",
    "py_is_quasi_static",
    "py_pseudo_label",
]


@dataclass(frozen=True)
class ArrayView:
    """A contiguous, dtype-normalized view of a caller array.

    ``copied`` is False when the caller's buffer could be used as-is
    (already contiguous with the target dtype); otherwise the data was
    copied once at the boundary.
    """

    data: np.ndarray
    copied: bool


def as_array_view(array, dtype, shape_len: int) -> ArrayView:
    arr = np.asarray(array)
    if arr.ndim != shape_len:
        raise ValueError(f"expected a {shape_len}-D array, got shape {arr.shape}")
    normalized = np.ascontiguousarray(arr, dtype=dtype)
    return ArrayView(data=normalized, copied=normalized is not arr)


def config_defaults() -> dict:
    """Pipeline defaults, key for key the run configuration."""
    return dict(RunConfig().__dict__)


def _run_config(config: dict | None) -> RunConfig:
    if not config:
        return RunConfig()
    defaults = config_defaults()
    unknown = set(config) - set(defaults)
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")
    defaults.update(config)
    return RunConfig(**defaults)


def py_pseudo_label(flow, config: dict | None = None):
    """Instance pseudo-labels for one 2 x H x W flow array.

    Returns (labels H x W int32, fg H x W bool, instance_count). Non-finite
    input raises, mirroring the .flo loader.
    """
    view = as_array_view(flow, np.float32, 3)
    if view.data.shape[0] != 2:
        raise ValueError(f"flow must be 2 x H x W, got {view.data.shape}")
    field = FlowField(u=view.data[0], v=view.data[1])
    cfg = _run_config(config)
    label = generate_pseudo_label(field, cfg.pseudo_config())
    return label.instances.labels.copy(), label.fg.data.copy(), label.instances.n_instances


def py_is_quasi_static(flow, config: dict | None = None) -> bool:
    view = as_array_view(flow, np.float32, 3)
    if view.data.shape[0] != 2:
        raise ValueError(f"flow must be 2 x H x W, got {view.data.shape}")
    cfg = _run_config(config)
    stats = corner_stats(FlowField(u=view.data[0], v=view.data[1]), cfg.patch_fraction)
    return is_quasi_static(stats, cfg.tau_static)


def _label_map(array) -> LabelMap:
    view = as_array_view(array, np.int64, 2)
    return LabelMap.from_raw(view.data)


def py_evaluate(pred, gt) -> dict:
    """Single-pair metric map for two H x W integer label arrays.

    Labels are normalized like the file loader (contiguous IDs in
    first-occurrence raster order); fg_ari is None when gt has no foreground.
    """
    image = evaluate_pair(_label_map(pred), _label_map(gt))
    ap = image.tp / (image.tp + image.fp) if image.tp + image.fp else 1.0
    ar = image.tp / (image.tp + image.fn) if image.tp + image.fn else 1.0
    f1 = 2 * ap * ar / (ap + ar) if ap + ar > 0 else 0.0
    return {
        "f1_50": f1,
        "ap_50": ap,
        "ar_50": ar,
        "fg_ari": image.fg_ari,
        "all_ari": image.all_ari,
        "tp": image.tp,
        "fp": image.fp,
        "fn": image.fn,
    }


def py_evaluate_dataset(pred_dir, gt_dir) -> dict:
    """Directory-level evaluation, delegating to the library."""
    return evaluate_dataset(pred_dir, gt_dir).to_dict()
