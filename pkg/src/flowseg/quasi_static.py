"""Quasi-static frame detection from corner-patch flow statistics.

A frame pair counts as quasi-static when at least three of the four image
corner patches have mean flow magnitude strictly below the threshold; the
corners act as a proxy for camera motion because moving objects tend to sit
near the image center.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateImage
from .flow_io import FlowField

# Corner patches cover this fraction of image height and width by default.
DEFAULT_PATCH_FRACTION = 0.15


@dataclass(frozen=True)
class CornerStats:
    """Mean flow magnitude per corner patch: top-left, top-right, bottom-left, bottom-right."""

    mean_magnitudes: tuple[float, float, float, float]
    patch_fraction: float


def corner_stats(flow: FlowField, patch_fraction: float = DEFAULT_PATCH_FRACTION) -> CornerStats:
    """Mean per-pixel Euclidean flow magnitude in each corner patch.

    Patches are ceil(fraction*H) x ceil(fraction*W) pixels anchored at the
    four corners, so even tiny images get at least one pixel per patch.
    """
    if not 0.0 < patch_fraction <= 0.5:
        raise ValueError(f"patch_fraction must be in (0, 0.5], got {patch_fraction}")
    h, w = flow.u.shape
    if h < 2 or w < 2:
        raise DegenerateImage(f"image {h}x{w} too small for corner statistics")
    ph = math.ceil(patch_fraction * h)
    pw = math.ceil(patch_fraction * w)
    mag = flow.magnitude()
    corners = (
        mag[:ph, :pw],
        mag[:ph, w - pw :],
        mag[h - ph :, :pw],
        mag[h - ph :, w - pw :],
    )
    means = tuple(float(c.mean()) for c in corners)
    return CornerStats(mean_magnitudes=means, patch_fraction=patch_fraction)


def is_quasi_static(stats: CornerStats, tau_static: float) -> bool:
    """True iff at least 3 of the 4 corner means are strictly below tau_static."""
    if tau_static <= 0:
        raise ValueError(f"tau_static must be positive, got {tau_static}")
    below = sum(1 for m in stats.mean_magnitudes if m < tau_static)
    return below >= 3
