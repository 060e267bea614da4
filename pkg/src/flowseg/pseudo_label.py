"""Instance pseudo-labels from a quasi-static frame's optical flow.

Stages: magnitude thresholding -> connected components -> gradient-triggered
splitting -> density clustering of (magnitude, angle, position) features.
The whole pipeline is deterministic; there is no RNG anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .clustering import HdbscanParams, hdbscan
from .errors import ClusteringDegenerate
from .flow_io import BinaryMask, FlowField, LabelMap


@dataclass(frozen=True)
class PseudoLabelConfig:
    tau_fg: float = 2.5  # foreground flow-magnitude threshold, px/frame
    tau_grad: float = 20.0  # interior flow-gradient norm threshold
    min_component_px: int = 25
    connectivity: int = 8
    clustering: HdbscanParams = field(default_factory=HdbscanParams)
    spatial_weight: float = 0.5  # weight of standardized (x, y) features

    def __post_init__(self):
        if self.tau_fg <= 0:
            raise ValueError(f"tau_fg must be positive, got {self.tau_fg}")
        if self.tau_grad <= 0:
            raise ValueError(f"tau_grad must be positive, got {self.tau_grad}")
        if self.min_component_px < 1:
            raise ValueError(f"min_component_px must be >= 1, got {self.min_component_px}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")


@dataclass(frozen=True)
class PseudoLabel:
    fg: BinaryMask
    instances: LabelMap
    source_frame: str = ""


def foreground_mask(flow: FlowField, tau_fg: float) -> BinaryMask:
    """Pixels whose flow magnitude strictly exceeds tau_fg."""
    return BinaryMask(flow.magnitude() > tau_fg)


def connected_components(mask: BinaryMask, connectivity: int = 8, min_component_px: int = 1) -> LabelMap:
    """Label maximal connected regions 1..C in first-pixel raster order.

    Components smaller than min_component_px are relabeled to background.
    """
    if connectivity == 4:
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    elif connectivity == 8:
        structure = np.ones((3, 3), dtype=int)
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    raw, _count = ndimage.label(mask.data, structure=structure)
    if min_component_px > 1 and raw.max() > 0:
        sizes = np.bincount(raw.ravel())
        small = np.flatnonzero(sizes < min_component_px)
        raw[np.isin(raw, small[small > 0])] = 0
    return LabelMap.from_raw(raw)


def flow_gradient_norm(flow: FlowField) -> np.ndarray:
    """Combined norm of both flow channels' spatial gradients.

    Central differences with replicate padding at image borders; units are
    px/frame per px.
    """
    total = np.zeros(flow.u.shape, dtype=np.float64)
    for chan in (flow.u, flow.v):
        c = np.pad(chan.astype(np.float64), 1, mode="edge")
        ddx = (c[1:-1, 2:] - c[1:-1, :-2]) / 2.0
        ddy = (c[2:, 1:-1] - c[:-2, 1:-1]) / 2.0
        total += ddx**2 + ddy**2
    return np.sqrt(total)


def _erode8(mask: np.ndarray) -> np.ndarray:
    """One-pixel morphological erosion with the full 8-neighborhood.

    Pixels on the image border are never interior (out-of-image counts as
    outside the component).
    """
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    out = mask.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out &= padded[1 + dy : padded.shape[0] - 1 + dy, 1 + dx : padded.shape[1] - 1 + dx]
    return out


def needs_split(flow: FlowField, component: BinaryMask, tau_grad: float) -> bool:
    """True when any interior pixel of the component has a flow-gradient norm
    above tau_grad. The interior excludes the contour (one-pixel erosion), so
    the component's own silhouette edge never triggers a split."""
    comp = component.data
    if not comp.any():
        raise ValueError("component is empty")
    interior = _erode8(comp)
    if not interior.any():
        return False
    return bool((flow_gradient_norm(flow)[interior] > tau_grad).any())


def _component_features(flow: FlowField, ys: np.ndarray, xs: np.ndarray, spatial_weight: float) -> np.ndarray:
    """Per-pixel clustering features: standardized magnitude, angle as a
    standardized (cos, sin) pair, and jointly standardized positions scaled
    by spatial_weight. Constant channels are zeroed."""
    u = flow.u[ys, xs].astype(np.float64)
    v = flow.v[ys, xs].astype(np.float64)
    mag = np.hypot(u, v)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(mag > 0, u / mag, 0.0)
        sin = np.where(mag > 0, v / mag, 0.0)

    def standardize(a: np.ndarray) -> np.ndarray:
        s = a.std()
        return (a - a.mean()) / s if s > 1e-12 else np.zeros_like(a)

    dx = xs - xs.mean()
    dy = ys - ys.mean()
    pooled = np.concatenate([dx, dy]).std()
    if pooled <= 1e-12:
        px = np.zeros_like(dx, dtype=np.float64)
        py = np.zeros_like(dy, dtype=np.float64)
    else:
        px = spatial_weight * dx / pooled
        py = spatial_weight * dy / pooled
    return np.column_stack([standardize(mag), standardize(cos), standardize(sin), px, py])


def split_component(
    flow: FlowField,
    component: BinaryMask,
    params: HdbscanParams,
    spatial_weight: float = 0.5,
) -> LabelMap:
    """Partition one connected component into motion-coherent instances.

    Components too small to cluster come back whole (single instance).
    HDBSCAN noise pixels are reassigned to the nearest cluster centroid in
    feature space so instances stay dense.

    Raises ClusteringDegenerate when clustering marks every pixel noise; the
    caller keeps the component whole in that case.
    """
    comp = component.data
    ys, xs = np.nonzero(comp)
    if ys.size == 0:
        raise ValueError("component is empty")
    single = np.zeros(comp.shape, dtype=np.int32)
    if ys.size < params.min_cluster_size or ys.size <= params.min_samples:
        single[comp] = 1
        return LabelMap(single)
    feats = _component_features(flow, ys, xs, spatial_weight)
    assignment = hdbscan(feats, params)
    labels = assignment.labels.copy()
    n_clusters = assignment.n_clusters
    if n_clusters == 0:
        raise ClusteringDegenerate("all component pixels classified as noise")
    noise = labels < 0
    if noise.any():
        centroids = np.stack([feats[labels == c].mean(axis=0) for c in range(n_clusters)])
        d = ((feats[noise, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels[noise] = d.argmin(axis=1)
    out = np.zeros(comp.shape, dtype=np.int32)
    out[ys, xs] = labels + 1
    return LabelMap.from_raw(out)


def generate_pseudo_label(flow: FlowField, config: PseudoLabelConfig, source_frame: str = "") -> PseudoLabel:
    """Full pseudo-label pipeline for one quasi-static frame.

    The caller is responsible for having screened the frame with the
    quasi-static test; empty foreground simply yields zero instances.
    """
    fg = foreground_mask(flow, config.tau_fg)
    components = connected_components(fg, config.connectivity, config.min_component_px)
    out = np.zeros(fg.data.shape, dtype=np.int32)
    next_id = 1
    for c in range(1, components.n_instances + 1):
        comp = BinaryMask(components.labels == c)
        parts: LabelMap | None = None
        if needs_split(flow, comp, config.tau_grad):
            try:
                parts = split_component(flow, comp, config.clustering, config.spatial_weight)
            except ClusteringDegenerate:
                parts = None
        if parts is None:
            out[comp.data] = next_id
            next_id += 1
        else:
            for i in range(1, parts.n_instances + 1):
                out[parts.labels == i] = next_id
                next_id += 1
    return PseudoLabel(fg=fg, instances=LabelMap.from_raw(out), source_frame=source_frame)
