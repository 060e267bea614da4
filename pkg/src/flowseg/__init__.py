"""Motion-based instance pseudo-labels from optical flow, slot training
losses, and multi-object discovery metrics."""

from .assignment import MatchResult, hungarian, mask_cost, match_masks
from .clustering import ClusterAssignment, HdbscanParams, core_distances, extract_clusters, hdbscan, mutual_reachability_mst
from .config import RunConfig
from .flow_io import (
    BinaryMask,
    FlowField,
    LabelMap,
    read_flo,
    read_label_map,
    read_mask,
    write_flo,
    write_label_map,
    write_mask,
)
from .losses import LossConfig, drop_gate, fg_bg_loss, fg_prediction, wbce
from .metrics import MetricsReport, ari, detection_prf, evaluate_dataset, iou
from .pseudo_label import (
    PseudoLabel,
    PseudoLabelConfig,
    connected_components,
    foreground_mask,
    generate_pseudo_label,
    needs_split,
    split_component,
)
from .quasi_static import CornerStats, corner_stats, is_quasi_static
from .slots import (
    AdamState,
    DeactivationMlp,
    SlotSet,
    adam_step,
    apply_deactivation,
    deactivate,
    load_checkpoint,
    mlp_backward,
    save_checkpoint,
    softmax_masks,
)
from .synth import ObjectSpec, SceneSpec, SlotFixture, make_slot_fixture, render

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BinaryMask",
    "ClusterAssignment",
    "CornerStats",
    "DeactivationMlp",
    "FlowField",
    "HdbscanParams",
    "LabelMap",
    "LossConfig",
    "MatchResult",
    "MetricsReport",
    "ObjectSpec",
    "PseudoLabel",
    "PseudoLabelConfig",
    "RunConfig",
    "SceneSpec",
    "SlotFixture",
    "SlotSet",
    "adam_step",
    "apply_deactivation",
    "ari",
    "connected_components",
    "core_distances",
    "corner_stats",
    "deactivate",
    "detection_prf",
    "drop_gate",
    "evaluate_dataset",
    "extract_clusters",
    "fg_bg_loss",
    "fg_prediction",
    "foreground_mask",
    "generate_pseudo_label",
    "hdbscan",
    "hungarian",
    "iou",
    "is_quasi_static",
    "load_checkpoint",
    "make_slot_fixture",
    "mask_cost",
    "match_masks",
    "mlp_backward",
    "mutual_reachability_mst",
    "needs_split",
    "read_flo",
    "read_label_map",
    "read_mask",
    "render",
    "save_checkpoint",
    "softmax_masks",
    "split_component",
    "wbce",
    "write_flo",
    "write_label_map",
    "write_mask",
]
