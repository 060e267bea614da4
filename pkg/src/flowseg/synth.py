"""Procedural scenes with exact ground-truth flow, labels, and slot fixtures.

Objects are axis-aligned rectangles or ellipses with per-object translational
velocity. Flow on occluded pixels takes the front object's velocity
(painter's order by depth), matching what a flow estimator sees of visible
surfaces. Everything is deterministic given the spec's seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow_io import BinaryMask, FlowField, LabelMap
from .slots import SlotSet


@dataclass(frozen=True)
class ObjectSpec:
    shape: str  # "rect" or "ellipse"
    position: tuple[float, float]  # rect: (left, top); ellipse: center (cx, cy)
    size: tuple[float, float]  # rect: (width, height); ellipse: semi-axes (rx, ry)
    velocity: tuple[float, float] = (0.0, 0.0)  # (u, v) px/frame
    depth: int = 0  # higher = nearer; painted later

    def __post_init__(self):
        if self.shape not in ("rect", "ellipse"):
            raise ValueError(f"shape must be 'rect' or 'ellipse', got {self.shape!r}")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError(f"object size must be positive, got {self.size}")

    @property
    def moving(self) -> bool:
        return self.velocity != (0.0, 0.0)

    def rasterize(self, height: int, width: int) -> np.ndarray:
        yy, xx = np.mgrid[0:height, 0:width]
        if self.shape == "rect":
            x0, y0 = self.position
            w, h = self.size
            return (xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h)
        cx, cy = self.position
        rx, ry = self.size
        return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    objects: tuple[ObjectSpec, ...]
    camera_velocity: tuple[float, float] = (0.0, 0.0)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "camera_velocity", tuple(self.camera_velocity))
        if self.width < 1 or self.height < 1:
            raise ValueError(f"scene must be at least 1x1, got {self.width}x{self.height}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for obj in self.objects:
            if not obj.rasterize(self.height, self.width).any():
                raise ValueError(f"object {obj} lies outside the {self.width}x{self.height} image")


@dataclass(frozen=True)
class RenderResult:
    flow: FlowField
    labels: LabelMap  # all objects, occlusion-resolved, contiguous IDs
    fg: BinaryMask  # labels > 0
    label_object: tuple[int, ...]  # object index per instance ID 1..S


def render(spec: SceneSpec) -> RenderResult:
    """Exact flow field and ground-truth instance masks for a scene."""
    h, w = spec.height, spec.width
    u = np.full((h, w), spec.camera_velocity[0], dtype=np.float64)
    v = np.full((h, w), spec.camera_velocity[1], dtype=np.float64)
    painted = np.zeros((h, w), dtype=np.int32)
    order = sorted(range(len(spec.objects)), key=lambda i: (spec.objects[i].depth, i))
    for idx in order:
        obj = spec.objects[idx]
        mask = obj.rasterize(h, w)
        u[mask] = obj.velocity[0] + spec.camera_velocity[0]
        v[mask] = obj.velocity[1] + spec.camera_velocity[1]
        painted[mask] = idx + 1
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        u += rng.normal(0.0, spec.noise_sigma, (h, w))
        v += rng.normal(0.0, spec.noise_sigma, (h, w))
    labels = LabelMap.from_raw(painted)
    # Recover which object each contiguous ID came from (occlusion may have
    # erased some objects entirely).
    label_object = []
    for i in range(1, labels.n_instances + 1):
        ys, xs = np.nonzero(labels.labels == i)
        label_object.append(int(painted[ys[0], xs[0]]) - 1)
    return RenderResult(
        flow=FlowField(u=u, v=v),
        labels=labels,
        fg=BinaryMask(labels.labels > 0),
        label_object=tuple(label_object),
    )


@dataclass(frozen=True)
class SlotFixture:
    """Stage-2 training fixture: slots plus the supervision derived from motion."""

    slots: SlotSet
    fg_flags: np.ndarray  # per-slot bool: True when the slot carries an object
    gt_labels: LabelMap  # every object, moving or static
    pseudo_instances: tuple[BinaryMask, ...]  # moving objects only
    pseudo_fg: BinaryMask


def make_slot_fixture(
    spec: SceneSpec,
    k: int,
    slot_dim: int = 32,
    separation: float = 6.0,
    object_logit: float = 8.0,
    seed: int = 0,
    static_z_from_mover: bool = True,
) -> SlotFixture:
    """Slot set for a rendered scene: one slot per object, background slots
    tiling the rest as vertical strips.

    Slot vectors come from two unit-variance Gaussian clusters whose means
    sit ``separation`` apart along the first axis (foreground positive side),
    so a deactivation MLP has a learnable signal exactly when separation > 0.
    With ``static_z_from_mover``, each zero-velocity object's vector is an
    exact copy of a moving object's vector, modeling a static instance of a
    moving category.
    """
    n_obj = len(spec.objects)
    if k < n_obj + 1:
        raise ValueError(f"need at least {n_obj + 1} slots for {n_obj} objects, got {k}")
    rendered = render(spec)
    h, w = spec.height, spec.width
    alpha = np.zeros((k, h, w), dtype=np.float64)
    fg_flags = np.zeros(k, dtype=bool)
    object_masks = [obj.rasterize(h, w) for obj in spec.objects]
    any_object = np.zeros((h, w), dtype=bool)
    for mask in object_masks:
        any_object |= mask
    for i, mask in enumerate(object_masks):
        alpha[i][mask] = object_logit
        fg_flags[i] = True
    n_bg = k - n_obj
    strip = np.minimum((np.arange(w) * n_bg) // w, n_bg - 1)
    for t in range(n_bg):
        region = (~any_object) & np.broadcast_to(strip == t, (h, w))
        alpha[n_obj + t][region] = object_logit

    rng = np.random.default_rng(seed)
    z = np.empty((k, slot_dim), dtype=np.float64)
    fg_mean = np.zeros(slot_dim)
    fg_mean[0] = separation / 2.0
    for i in range(k):
        mean = fg_mean if fg_flags[i] else -fg_mean
        z[i] = rng.normal(0.0, 1.0, slot_dim) + mean
    if static_z_from_mover:
        movers = [i for i, obj in enumerate(spec.objects) if obj.moving]
        if movers:
            for i, obj in enumerate(spec.objects):
                if not obj.moving:
                    z[i] = z[movers[0]]

    moving_ids = [
        lab
        for lab, obj_idx in enumerate(rendered.label_object, start=1)
        if spec.objects[obj_idx].moving
    ]
    pseudo_instances = tuple(BinaryMask(rendered.labels.labels == lab) for lab in moving_ids)
    pseudo = np.zeros((h, w), dtype=bool)
    for inst in pseudo_instances:
        pseudo |= inst.data
    return SlotFixture(
        slots=SlotSet(z=z, alpha=alpha),
        fg_flags=fg_flags,
        gt_labels=rendered.labels,
        pseudo_instances=pseudo_instances,
        pseudo_fg=BinaryMask(pseudo),
    )
