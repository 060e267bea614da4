"""Slot-set representation, the slot-deactivation MLP, and a toy mask head.

The deactivation MLP maps each slot vector independently to a foreground
probability; forward, backward, and the Adam update are implemented by hand
so that training carries no framework dependency. The toy mask head is a
per-slot linear map from pixel features to alpha logits, standing in for a
frozen-encoder attention module at desk scale.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimensionMismatch, TruncatedFile
from .flow_io import LabelMap

CHECKPOINT_MAGIC = b"MRDC"
CHECKPOINT_VERSION = 1


def softmax_masks(alpha: np.ndarray) -> np.ndarray:
    """Per-pixel softmax over the slot axis of K x H x W logits.

    Numerically stable (per-pixel max subtracted); output columns sum to 1.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim != 3:
        raise DimensionMismatch(f"alpha must be K x H x W, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("alpha logits contain NaN or Inf")
    shifted = a - a.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


@dataclass(frozen=True)
class SlotSet:
    """K slot vectors with their alpha logits and softmax masks."""

    z: np.ndarray  # K x D
    alpha: np.ndarray  # K x H x W
    m: np.ndarray = field(init=False)  # K x H x W, softmax of alpha over slots

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if z.ndim != 2:
            raise DimensionMismatch(f"z must be K x D, got shape {z.shape}")
        if alpha.ndim != 3 or alpha.shape[0] != z.shape[0]:
            raise DimensionMismatch(f"alpha {alpha.shape} inconsistent with z {z.shape}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "m", softmax_masks(alpha))

    @property
    def n_slots(self) -> int:
        return self.z.shape[0]

    @property
    def slot_dim(self) -> int:
        return self.z.shape[1]


class DeactivationMlp:
    """MLP over slot vectors: ReLU hidden layers, sigmoid scalar output.

    Default geometry is 4 layers with hidden width 2048. Weights are listed
    as (fan_out, fan_in) matrices.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("weights and biases must be non-empty parallel lists")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch("layer shapes inconsistent")
        if self.weights[-1].shape[0] != 1:
            raise DimensionMismatch("output layer must have a single unit")

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int = 2048, n_layers: int = 4, seed: int = 0):
        """Xavier-uniform init: uniform(-a, a), a = sqrt(6 / (fan_in + fan_out))."""
        rng = np.random.default_rng(seed)
        sizes = [input_dim] + [hidden_dim] * (n_layers - 1) + [1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        n = len(self.weights)
        if len(params) != 2 * n:
            raise DimensionMismatch("parameter list length mismatch")
        self.weights = [np.asarray(params[2 * i], dtype=np.float64) for i in range(n)]
        self.biases = [np.asarray(params[2 * i + 1], dtype=np.float64) for i in range(n)]

    def copy(self) -> "DeactivationMlp":
        return DeactivationMlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(mlp: DeactivationMlp, z: np.ndarray):
    """Row-wise forward pass; returns (lambda, cache of layer inputs and preacts)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != mlp.input_dim:
        raise DimensionMismatch(f"z shape {z.shape} does not match MLP input {mlp.input_dim}")
    inputs = [z]
    preacts = []
    h = z
    n = len(mlp.weights)
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        pre = h @ w.T + b
        preacts.append(pre)
        h = _sigmoid(pre) if i == n - 1 else np.maximum(pre, 0.0)
        if i < n - 1:
            inputs.append(h)
    lam = h[:, 0]
    return lam, (inputs, preacts)


def deactivate(mlp: DeactivationMlp, z: np.ndarray) -> np.ndarray:
    """Per-slot foreground probability lambda in (0, 1)."""
    lam, _ = _forward(mlp, z)
    return lam


def mlp_backward(mlp: DeactivationMlp, z: np.ndarray, d_lambda: np.ndarray):
    """Exact gradients of sum(d_lambda * lambda) w.r.t. parameters and z.

    Returns (grads, dz) where grads is parallel to mlp.parameters().
    """
    lam, (inputs, preacts) = _forward(mlp, z)
    d_lambda = np.asarray(d_lambda, dtype=np.float64)
    if d_lambda.shape != lam.shape:
        raise DimensionMismatch(f"upstream gradient shape {d_lambda.shape} vs lambda {lam.shape}")
    n = len(mlp.weights)
    d_w = [None] * n
    d_b = [None] * n
    # Output layer: sigmoid
    delta = (d_lambda * lam * (1.0 - lam))[:, None]
    for i in range(n - 1, -1, -1):
        d_w[i] = delta.T @ inputs[i]
        d_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ mlp.weights[i]) * (preacts[i - 1] > 0)
    dz = delta @ mlp.weights[0]
    grads: list[np.ndarray] = []
    for w, b in zip(d_w, d_b):
        grads.extend((w, b))
    return grads, dz


@dataclass
class AdamState:
    """Bias-corrected Adam, one moment pair per parameter array."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One Adam update; moments update in place, new parameter arrays returned."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise DimensionMismatch("parameter/gradient/moment list lengths differ")
    state.step += 1
    t = state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = state.m[i] / (1 - state.beta1**t)
        v_hat = state.v[i] / (1 - state.beta2**t)
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


@dataclass(frozen=True)
class DeactivationResult:
    fg: np.ndarray  # H x W
    kept: tuple[int, ...]
    instances: LabelMap | None  # binarized mode only


def apply_deactivation(m: np.ndarray, lam: np.ndarray, binarize: bool) -> DeactivationResult:
    """Combine softmax masks with slot weights.

    Training mode (binarize=False): fg = sum_k lambda_k * m_k over all slots.
    Inference mode: slots with lambda > 0.5 are kept; fg = sum of kept masks;
    the instance map is the argmax over kept slots on pixels where fg > 0.5.
    """
    m = np.asarray(m, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if m.ndim != 3 or lam.shape != (m.shape[0],):
        raise DimensionMismatch(f"masks {m.shape} inconsistent with lambda {lam.shape}")
    if not binarize:
        fg = np.tensordot(lam, m, axes=1)
        return DeactivationResult(fg=fg, kept=tuple(range(m.shape[0])), instances=None)
    kept = tuple(int(k) for k in np.flatnonzero(lam > 0.5))
    h, w = m.shape[1:]
    if not kept:
        return DeactivationResult(fg=np.zeros((h, w)), kept=(), instances=LabelMap(np.zeros((h, w), dtype=np.int32)))
    sub = m[list(kept)]
    fg = sub.sum(axis=0)
    arg = sub.argmax(axis=0)
    raw = np.where(fg > 0.5, arg + 1, 0)
    return DeactivationResult(fg=fg, kept=kept, instances=LabelMap.from_raw(raw))


# --- Checkpoint format --------------------------------------------------------
# Flat binary: magic "MRDC", version u32, layer count u32; per layer
# rows u32, cols u32, row-major float32 weights, then float32 biases.
# All integers and floats little-endian.


def save_checkpoint(mlp: DeactivationMlp, path) -> None:
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(mlp.weights))]
    for w, b in zip(mlp.weights, mlp.biases):
        rows, cols = w.shape
        parts.append(struct.pack("<II", rows, cols))
        parts.append(w.astype("<f4").tobytes())
        parts.append(b.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> DeactivationMlp:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: not a deactivation checkpoint")
    if len(data) < 12:
        raise TruncatedFile(f"{path}: header incomplete")
    version, n_layers = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise TruncatedFile(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    weights, biases = [], []
    for _ in range(n_layers):
        if pos + 8 > len(data):
            raise TruncatedFile(f"{path}: layer header incomplete")
        rows, cols = struct.unpack("<II", data[pos : pos + 8])
        pos += 8
        wn, bn = rows * cols * 4, rows * 4
        if pos + wn + bn > len(data):
            raise TruncatedFile(f"{path}: layer payload incomplete")
        weights.append(np.frombuffer(data[pos : pos + wn], dtype="<f4").reshape(rows, cols).astype(np.float64))
        pos += wn
        biases.append(np.frombuffer(data[pos : pos + bn], dtype="<f4").astype(np.float64))
        pos += bn
    if pos != len(data):
        raise TruncatedFile(f"{path}: trailing bytes after last layer")
    return DeactivationMlp(weights, biases)


# --- Toy differentiable mask head ---------------------------------------------


class ToyMaskHead:
    """Per-slot linear map from pixel features to alpha logits.

    alpha[k, h, w] = W[k] . features[h, w] + b[k]. Used to exercise the
    matched-mask training loss at desk scale.
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.asarray(weight, dtype=np.float64)  # K x F
        self.bias = np.asarray(bias, dtype=np.float64)  # K
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionMismatch("toy head parameter shapes inconsistent")

    @classmethod
    def create(cls, n_slots: int, n_features: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        a = np.sqrt(6.0 / (n_features + n_slots))
        return cls(rng.uniform(-a, a, size=(n_slots, n_features)), np.zeros(n_slots))

    def forward(self, features: np.ndarray) -> np.ndarray:
        """features: H x W x F -> alpha logits K x H x W."""
        f = np.asarray(features, dtype=np.float64)
        if f.ndim != 3 or f.shape[2] != self.weight.shape[1]:
            raise DimensionMismatch(f"features {f.shape} do not match head {self.weight.shape}")
        return np.tensordot(self.weight, f, axes=([1], [2])) + self.bias[:, None, None]

    def backward(self, features: np.ndarray, m: np.ndarray, d_m: np.ndarray):
        """Gradients w.r.t. (weight, bias) given d(loss)/d(m) and m = softmax(alpha)."""
        f = np.asarray(features, dtype=np.float64)
        # Softmax Jacobian per pixel: d_alpha_k = m_k * (d_m_k - sum_j d_m_j m_j).
        inner = (d_m * m).sum(axis=0, keepdims=True)
        d_alpha = m * (d_m - inner)
        d_w = np.tensordot(d_alpha, f, axes=([1, 2], [0, 1]))
        d_b = d_alpha.sum(axis=(1, 2))
        return d_w, d_b
