"""Training objectives: weighted BCE for matched masks, the similarity drop
gate, and the foreground/background loss. Every loss returns its value and
the exact analytic gradient w.r.t. the predicted map.

Sign convention: the weighted BCE and the foreground NLL are implemented as
negated sums so that both quantities are minimized as losses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import MatchResult
from .errors import DimensionMismatch
from .flow_io import BinaryMask

DEFAULT_EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    eps: float = DEFAULT_EPS  # probability clamp applied before logs
    r_bg: float = 0.2  # background regularizer weight
    tau_drop: float = 0.99  # cosine-similarity drop threshold

    def __post_init__(self):
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must be in (0, 0.5), got {self.eps}")
        if self.r_bg <= 0:
            raise ValueError(f"r_bg must be positive, got {self.r_bg}")
        if not 0.0 < self.tau_drop <= 1.0:
            raise ValueError(f"tau_drop must be in (0, 1], got {self.tau_drop}")


def wbce(m_tilde: np.ndarray, p: BinaryMask, eps: float = DEFAULT_EPS):
    """Weighted binary cross-entropy between a matched mask and its target.

    With foreground rate r = mean(p), the foreground term is weighted by
    (2 - r), which up-weights small objects:

        loss = -(1/HW) * sum[ (2-r) p log m + (1-p) log(1-m) ]

    Returns (loss, d_loss/d_m_tilde); the gradient is zero where the clamp
    to [eps, 1-eps] is active.
    """
    m = np.asarray(m_tilde, dtype=np.float64)
    t = np.asarray(p.data, dtype=np.float64)
    if m.shape != t.shape:
        raise DimensionMismatch(f"prediction {m.shape} vs target {t.shape}")
    hw = m.size
    r = t.sum() / hw
    mc = np.clip(m, eps, 1.0 - eps)
    loss = -((2.0 - r) * t * np.log(mc) + (1.0 - t) * np.log1p(-mc)).sum() / hw
    inside = (m > eps) & (m < 1.0 - eps)
    grad = np.where(inside, -((2.0 - r) * t / mc - (1.0 - t) / (1.0 - mc)) / hw, 0.0)
    return float(loss), grad


def drop_gate(match: MatchResult, z: np.ndarray, tau_drop: float):
    """Unmatched slots to keep in the foreground loss.

    A slot is dropped when the max cosine similarity between its vector and
    any matched slot's vector exceeds tau_drop (it likely represents a static
    instance of a matched, moving category). With no matched slots every
    unmatched slot is kept. Zero vectors have undefined cosine similarity;
    they count as similarity 0 (kept) and raise the returned warning flag.

    Returns (kept_unmatched_indices, zero_vector_warning).
    """
    z = np.asarray(z, dtype=np.float64)
    matched = [s for s, _ in match.pairs]
    warn = False
    if not matched:
        return tuple(match.unmatched_slots), warn
    norms = np.linalg.norm(z, axis=1)
    kept = []
    for u in match.unmatched_slots:
        sims = []
        for s in matched:
            denom = norms[u] * norms[s]
            if denom == 0.0:
                warn = True
                sims.append(0.0)
            else:
                sims.append(float(z[u] @ z[s] / denom))
        if max(sims) <= tau_drop:
            kept.append(u)
    return tuple(kept), warn


def fg_prediction(m: np.ndarray, lam: np.ndarray, kept_unmatched, match: MatchResult) -> np.ndarray:
    """Foreground map entering the loss: lambda-weighted matched masks plus
    lambda-weighted kept unmatched masks."""
    m = np.asarray(m, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if m.ndim != 3 or lam.shape != (m.shape[0],):
        raise DimensionMismatch(f"masks {m.shape} inconsistent with lambda {lam.shape}")
    active = [s for s, _ in match.pairs] + list(kept_unmatched)
    out = np.zeros(m.shape[1:], dtype=np.float64)
    for k in active:
        out += lam[k] * m[k]
    return out


def fg_bg_loss(m_hat: np.ndarray, p_fg: BinaryMask, r_bg: float = 0.2, eps: float = DEFAULT_EPS):
    """Foreground NLL plus background regularizer.

        L_fg = -(1/HW) sum[ p_fg log m_hat ]          (m_hat clamped for the log)
        L_bg = (r_bg / N_bg) sum[ (p_fg = 0) m_hat ]   (0 when N_bg = 0)

    Returns (total, d_total/d_m_hat).
    """
    m = np.asarray(m_hat, dtype=np.float64)
    t = np.asarray(p_fg.data, dtype=np.float64)
    if m.shape != t.shape:
        raise DimensionMismatch(f"prediction {m.shape} vs target {t.shape}")
    hw = m.size
    mc = np.clip(m, eps, 1.0 - eps)
    l_fg = -(t * np.log(mc)).sum() / hw
    n_bg = hw - int(t.sum())
    bg = 1.0 - t
    if n_bg > 0:
        l_bg = (r_bg / n_bg) * (bg * m).sum()
        grad_bg = (r_bg / n_bg) * bg
    else:
        l_bg = 0.0
        grad_bg = np.zeros_like(m)
    inside = (m > eps) & (m < 1.0 - eps)
    grad = np.where(inside, -(t / mc) / hw, 0.0) + grad_bg
    return float(l_fg + l_bg), grad
