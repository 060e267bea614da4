"""Core data types and bit-exact file I/O.

Flow fields use the Middlebury .flo layout: a float32 magic (202021.25),
int32 width and height, then row-major interleaved (u, v) float32 samples,
all little-endian. Label maps are binary PGM (P5) with maxval 65535 and
big-endian samples; binary masks are 8-bit PGM with values 0/255.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    NonFinite,
    TooManyInstances,
    TruncatedFile,
    UnsupportedDepth,
)

FLO_MAGIC = np.float32(202021.25)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FlowField:
    """Dense 2-channel motion field in pixels/frame.

    ``u`` is horizontal displacement, ``v`` vertical, both H x W float32.
    Instances are immutable (arrays are marked read-only) and safe to share
    across threads.
    """

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float32)
        v = np.asarray(self.v, dtype=np.float32)
        if u.ndim != 2 or v.ndim != 2:
            raise DimensionMismatch(f"flow channels must be 2-D, got {u.shape} and {v.shape}")
        if u.shape != v.shape:
            raise DimensionMismatch(f"u {u.shape} and v {v.shape} differ")
        if u.shape[0] < 1 or u.shape[1] < 1:
            raise DimensionMismatch(f"flow field must be at least 1x1, got {u.shape}")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise NonFinite("flow field contains NaN or Inf")
        object.__setattr__(self, "u", _as_readonly(u))
        object.__setattr__(self, "v", _as_readonly(v))

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def magnitude(self) -> np.ndarray:
        """Per-pixel Euclidean magnitude sqrt(u^2 + v^2) as float64."""
        return np.hypot(self.u.astype(np.float64), self.v.astype(np.float64))


@dataclass(frozen=True)
class BinaryMask:
    """H x W boolean mask."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=bool)
        if d.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {d.shape}")
        object.__setattr__(self, "data", _as_readonly(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class LabelMap:
    """H x W instance labels: 0 is background, instances are 1..S contiguous.

    Construction validates contiguity (every ID in 1..S occurs). Use
    :meth:`from_raw` to normalize arbitrary non-negative integer maps.
    """

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise DimensionMismatch(f"label map must be 2-D, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise DimensionMismatch(f"label map must be integer, got dtype {lab.dtype}")
        if lab.size and lab.min() < 0:
            raise ValueError("label map contains negative IDs")
        lab = lab.astype(np.int32)
        present = np.unique(lab)
        s = int(present.max()) if present.size else 0
        expected = np.arange(0, s + 1) if 0 in present else np.arange(1, s + 1)
        if not np.array_equal(present, expected):
            raise ValueError("instance IDs are not contiguous")
        object.__setattr__(self, "labels", _as_readonly(lab))

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> "LabelMap":
        """Relabel arbitrary non-negative IDs to 1..S in first-occurrence raster order."""
        raw = np.asarray(raw)
        if raw.size and raw.min() < 0:
            raise ValueError("label map contains negative IDs")
        out = np.zeros(raw.shape, dtype=np.int32)
        mapping: dict[int, int] = {}
        flat_in = raw.ravel()
        flat_out = out.ravel()
        for i in np.flatnonzero(flat_in):
            v = int(flat_in[i])
            if v not in mapping:
                mapping[v] = len(mapping) + 1
            flat_out[i] = mapping[v]
        return cls(out)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def n_instances(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def to_masks(self) -> list[BinaryMask]:
        """Disjoint per-instance masks for IDs 1..S (background excluded)."""
        return [BinaryMask(self.labels == i) for i in range(1, self.n_instances + 1)]

    @classmethod
    def from_masks(cls, masks: list[BinaryMask], shape: tuple[int, int] | None = None) -> "LabelMap":
        """Inverse of :meth:`to_masks`; masks must be pairwise disjoint."""
        if not masks:
            if shape is None:
                raise DimensionMismatch("cannot infer shape from an empty mask list")
            return cls(np.zeros(shape, dtype=np.int32))
        out = np.zeros(masks[0].data.shape, dtype=np.int32)
        for i, m in enumerate(masks, start=1):
            if m.data.shape != out.shape:
                raise DimensionMismatch("masks have inconsistent shapes")
            if (out[m.data] != 0).any():
                raise ValueError("masks overlap; cannot form a label map")
            out[m.data] = i
        return cls(out)


# --- Middlebury .flo ---------------------------------------------------------


def read_flo(path) -> FlowField:
    """Read a Middlebury .flo file; the payload is decoded bit-exactly."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise TruncatedFile(f"{path}: shorter than the 4-byte magic")
    magic = np.frombuffer(data[:4], dtype="<f4")[0]
    if magic != FLO_MAGIC:
        raise BadMagic(f"{path}: first 4 bytes decode to {magic!r}, expected 202021.25")
    if len(data) < 12:
        raise TruncatedFile(f"{path}: header incomplete")
    w, h = (int(x) for x in np.frombuffer(data[4:12], dtype="<i4"))
    if w < 1 or h < 1:
        raise TruncatedFile(f"{path}: invalid dimensions {w}x{h} in header")
    expected = 12 + 8 * w * h
    if len(data) != expected:
        raise TruncatedFile(f"{path}: payload is {len(data)} bytes, header implies {expected}")
    uv = np.frombuffer(data[12:], dtype="<f4").reshape(h, w, 2)
    if not np.isfinite(uv).all():
        raise NonFinite(f"{path}: flow payload contains NaN or Inf")
    return FlowField(u=uv[:, :, 0], v=uv[:, :, 1])


def write_flo(flow: FlowField, path) -> None:
    """Write a FlowField in Middlebury .flo layout (little-endian throughout)."""
    h, w = flow.u.shape
    header = FLO_MAGIC.tobytes() + np.array([w, h], dtype="<i4").tobytes()
    uv = np.empty((h, w, 2), dtype="<f4")
    uv[:, :, 0] = flow.u
    uv[:, :, 1] = flow.v
    Path(path).write_bytes(header + uv.tobytes())


# --- PGM ---------------------------------------------------------------------


def _read_pgm(path) -> tuple[np.ndarray, int]:
    """Parse a binary (P5) PGM. Returns (samples, maxval)."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise UnsupportedDepth(f"{path}: not a binary PGM (P5) file")
    # Header tokens may be separated by arbitrary whitespace and '#' comments.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedFile(f"{path}: PGM header incomplete")
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if w < 1 or h < 1:
        raise TruncatedFile(f"{path}: invalid dimensions {w}x{h}")
    dtype = ">u2" if maxval > 255 else "u1"
    expected = w * h * (2 if maxval > 255 else 1)
    payload = data[pos:]
    if len(payload) != expected:
        raise TruncatedFile(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(h, w), maxval


def read_label_map(path) -> LabelMap:
    """Read a 16-bit PGM label map, relabeling to contiguous IDs.

    Relabeling preserves first-occurrence raster order, so maps written by
    :func:`write_label_map` round-trip unchanged.
    """
    samples, maxval = _read_pgm(path)
    if maxval != 65535:
        raise UnsupportedDepth(f"{path}: label maps require maxval 65535, got {maxval}")
    return LabelMap.from_raw(samples.astype(np.int64))


def write_label_map(label_map: LabelMap, path) -> None:
    if label_map.n_instances > 65535:
        raise TooManyInstances(f"{label_map.n_instances} instances exceed 16-bit PGM range")
    h, w = label_map.labels.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + label_map.labels.astype(">u2").tobytes())


def read_mask(path) -> BinaryMask:
    """Read an 8-bit PGM as a binary mask (nonzero samples are True)."""
    samples, maxval = _read_pgm(path)
    if maxval > 255:
        raise UnsupportedDepth(f"{path}: binary masks require maxval <= 255, got {maxval}")
    return BinaryMask(samples > 0)


def write_mask(mask: BinaryMask, path) -> None:
    h, w = mask.data.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.data.astype("u1") * 255).tobytes())
