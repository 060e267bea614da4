"""Multi-object discovery evaluation: IoU, AP/AR/F1 at IoU 50%, and the
adjusted Rand index over foreground-only or all pixels.

Detection counts come from Hungarian matching on mask IoU; a matched pair is
a true positive only when its IoU strictly exceeds the threshold. Spurious
predictions count as false positives, which penalizes background
over-segmentation. Combinatorial ARI terms use exact integer arithmetic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .assignment import hungarian
from .errors import DimensionMismatch, EmptyRegion, MissingPair
from .flow_io import BinaryMask, LabelMap, read_label_map


def iou(a: BinaryMask, b: BinaryMask) -> float:
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.data.shape} vs {b.data.shape}")
    inter = int((a.data & b.data).sum())
    union = int((a.data | b.data).sum())
    if union == 0:
        return 1.0
    return inter / union


@dataclass(frozen=True)
class DetectionCounts:
    ap: float
    ar: float
    f1: float
    tp: int
    fp: int
    fn: int


def _prf_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # Zero-denominator convention: a vacuous precision/recall counts as 1.
    ap = tp / (tp + fp) if tp + fp > 0 else 1.0
    ar = tp / (tp + fn) if tp + fn > 0 else 1.0
    f1 = 2 * ap * ar / (ap + ar) if ap + ar > 0 else 0.0
    return ap, ar, f1


def detection_prf(pred: LabelMap, gt: LabelMap, iou_thresh: float = 0.5) -> DetectionCounts:
    """Instance detection counts at a strict IoU threshold.

    Predicted and ground-truth instances are matched by Hungarian assignment
    on IoU; pairs with IoU <= iou_thresh, unmatched predictions, and
    unmatched ground-truth instances become FP/FN respectively.
    """
    if pred.labels.shape != gt.labels.shape:
        raise DimensionMismatch(f"label map shapes differ: {pred.labels.shape} vs {gt.labels.shape}")
    n_pred, n_gt = pred.n_instances, gt.n_instances
    tp = 0
    if n_pred > 0 and n_gt > 0:
        pred_masks = pred.to_masks()
        gt_masks = gt.to_masks()
        cost = np.empty((n_pred, n_gt))
        ious = np.empty((n_pred, n_gt))
        for i, pm in enumerate(pred_masks):
            for j, gm in enumerate(gt_masks):
                ious[i, j] = iou(pm, gm)
                cost[i, j] = 1.0 - ious[i, j]
        match = hungarian(cost)
        tp = sum(1 for i, j in match.pairs if ious[i, j] > iou_thresh)
    fp = n_pred - tp
    fn = n_gt - tp
    ap, ar, f1 = _prf_from_counts(tp, fp, fn)
    return DetectionCounts(ap=ap, ar=ar, f1=f1, tp=tp, fp=fp, fn=fn)


def _comb2(x: np.ndarray) -> int:
    return int(sum(int(v) * (int(v) - 1) // 2 for v in x))


def ari(pred: LabelMap, gt: LabelMap, region: str = "all") -> float:
    """Adjusted Rand index between two labelings.

    region="fg_only" restricts both labelings to ground-truth foreground
    pixels; predicted background there stays its own cluster (an empty
    prediction must not score perfectly). region="all" keeps every pixel,
    with background as an ordinary cluster on each side. Degenerate
    contingency tables (single cluster both sides, or a single pixel) score 1
    by convention.
    """
    if pred.labels.shape != gt.labels.shape:
        raise DimensionMismatch(f"label map shapes differ: {pred.labels.shape} vs {gt.labels.shape}")
    if region == "fg_only":
        sel = gt.labels > 0
        if not sel.any():
            raise EmptyRegion("ground truth has no foreground pixels")
        a = pred.labels[sel]
        b = gt.labels[sel]
    elif region == "all":
        a = pred.labels.ravel()
        b = gt.labels.ravel()
    else:
        raise ValueError(f"region must be 'all' or 'fg_only', got {region!r}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    n = a.size
    index = _comb2(table.ravel())
    sum_a = _comb2(table.sum(axis=1))
    sum_b = _comb2(table.sum(axis=0))
    total = n * (n - 1) // 2
    if total == 0:
        return 1.0
    expected = Fraction(sum_a * sum_b, total)
    max_index = Fraction(sum_a + sum_b, 2)
    denom = max_index - expected
    if denom == 0:
        return 1.0
    return float((index - expected) / denom)


@dataclass(frozen=True)
class ImageMetrics:
    name: str
    tp: int
    fp: int
    fn: int
    fg_ari: float | None  # None when the image has no GT foreground
    all_ari: float


@dataclass(frozen=True)
class MetricsReport:
    f1_50: float
    ap_50: float
    ar_50: float
    fg_ari: float | None
    all_ari: float
    tp: int
    fp: int
    fn: int
    per_image: tuple[ImageMetrics, ...]

    def to_dict(self) -> dict:
        return {
            "f1_50": self.f1_50,
            "ap_50": self.ap_50,
            "ar_50": self.ar_50,
            "fg_ari": self.fg_ari,
            "all_ari": self.all_ari,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_image": [
                {
                    "name": im.name,
                    "tp": im.tp,
                    "fp": im.fp,
                    "fn": im.fn,
                    "fg_ari": im.fg_ari,
                    "all_ari": im.all_ari,
                }
                for im in self.per_image
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_pair(pred: LabelMap, gt: LabelMap, name: str = "") -> ImageMetrics:
    det = detection_prf(pred, gt)
    try:
        fg = ari(pred, gt, region="fg_only")
    except EmptyRegion:
        fg = None
    return ImageMetrics(
        name=name, tp=det.tp, fp=det.fp, fn=det.fn, fg_ari=fg, all_ari=ari(pred, gt, region="all")
    )


def aggregate(per_image: list[ImageMetrics]) -> MetricsReport:
    """Pool TP/FP/FN over images, then derive AP/AR/F1 from the totals;
    ARI variants average per image over images where they are defined."""
    tp = sum(im.tp for im in per_image)
    fp = sum(im.fp for im in per_image)
    fn = sum(im.fn for im in per_image)
    ap, ar, f1 = _prf_from_counts(tp, fp, fn)
    fg_vals = [im.fg_ari for im in per_image if im.fg_ari is not None]
    fg = sum(fg_vals) / len(fg_vals) if fg_vals else None
    all_vals = [im.all_ari for im in per_image]
    all_ari_mean = sum(all_vals) / len(all_vals) if all_vals else 1.0
    return MetricsReport(
        f1_50=f1,
        ap_50=ap,
        ar_50=ar,
        fg_ari=fg,
        all_ari=all_ari_mean,
        tp=tp,
        fp=fp,
        fn=fn,
        per_image=tuple(sorted(per_image, key=lambda im: im.name)),
    )


def evaluate_dataset(pred_dir, gt_dir) -> MetricsReport:
    """Evaluate matching .pgm label maps from two directories."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_files = {p.name: p for p in sorted(pred_dir.glob("*.pgm"))}
    gt_files = {p.name: p for p in sorted(gt_dir.glob("*.pgm"))}
    if set(pred_files) != set(gt_files):
        missing = set(pred_files) ^ set(gt_files)
        raise MissingPair(f"prediction/ground-truth sets differ on: {sorted(missing)}")
    per_image = []
    for name in sorted(pred_files):
        pred = read_label_map(pred_files[name])
        gt = read_label_map(gt_files[name])
        per_image.append(evaluate_pair(pred, gt, name=name))
    return aggregate(per_image)
