"""Training loops: the stage-2 slot-deactivation module on slot fixtures, the
stage-1 toy mask head, and the finite-difference gradient check suite.

Only the deactivation MLP (stage 2) or the toy head (stage 1) receives
gradients; slot masks and vectors are fixed inputs, mirroring a frozen
backbone.
"""
from __future__ import annotations

import numpy as np

from .assignment import MatchResult, match_masks
from .flow_io import BinaryMask
from .losses import LossConfig, drop_gate, fg_bg_loss, fg_prediction, wbce
from .slots import (
    AdamState,
    DeactivationMlp,
    ToyMaskHead,
    adam_step,
    apply_deactivation,
    deactivate,
    mlp_backward,
    softmax_masks,
)
from .synth import ObjectSpec, SceneSpec, SlotFixture, make_slot_fixture


def _match_fixture(fixture: SlotFixture) -> MatchResult:
    if fixture.pseudo_instances:
        return match_masks(fixture.slots.m, list(fixture.pseudo_instances))
    k = fixture.slots.n_slots
    return MatchResult(pairs=(), unmatched_slots=tuple(range(k)), total_cost=0.0)


def stage2_loss_and_grads(
    mlp: DeactivationMlp,
    fixture: SlotFixture,
    cfg: LossConfig,
    use_drop_gate: bool = True,
    match: MatchResult | None = None,
):
    """Foreground/background loss for one fixture and its gradient w.r.t. the
    MLP parameters. Gradients flow through lambda only; masks are frozen.

    ``match`` may be precomputed; it depends only on the frozen masks, so
    training loops hoist it out of the epoch loop.
    """
    m, z = fixture.slots.m, fixture.slots.z
    lam = deactivate(mlp, z)
    if match is None:
        match = _match_fixture(fixture)
    if use_drop_gate:
        kept, _ = drop_gate(match, z, cfg.tau_drop)
    else:
        kept = match.unmatched_slots
    m_hat = fg_prediction(m, lam, kept, match)
    loss, d_mhat = fg_bg_loss(m_hat, fixture.pseudo_fg, cfg.r_bg, cfg.eps)
    d_lam = np.zeros(lam.shape)
    for k in list(match.matched_slots()) + list(kept):
        d_lam[k] = (d_mhat * m[k]).sum()
    grads, _ = mlp_backward(mlp, z, d_lam)
    return loss, grads


def train_deactivator(
    mlp: DeactivationMlp,
    fixtures: list[SlotFixture],
    epochs: int,
    lr: float,
    batch_size: int,
    cfg: LossConfig,
    use_drop_gate: bool = True,
) -> list[dict]:
    """Adam training over fixture batches (batch-mean loss). Returns the loss
    log, one entry per optimizer step. Deterministic: fixtures are visited in
    order, no shuffling."""
    state = AdamState.for_params(mlp.parameters(), lr)
    matches = [_match_fixture(f) for f in fixtures]
    log: list[dict] = []
    step = 0
    for epoch in range(epochs):
        for start in range(0, len(fixtures), batch_size):
            batch = list(zip(fixtures[start : start + batch_size], matches[start : start + batch_size]))
            total = 0.0
            acc: list[np.ndarray] | None = None
            for fixture, match in batch:
                loss, grads = stage2_loss_and_grads(mlp, fixture, cfg, use_drop_gate, match=match)
                total += loss
                if acc is None:
                    acc = [g.copy() for g in grads]
                else:
                    for a, g in zip(acc, grads):
                        a += g
            scale = 1.0 / len(batch)
            assert acc is not None
            mean_grads = [a * scale for a in acc]
            mlp.set_parameters(adam_step(state, mlp.parameters(), mean_grads))
            step += 1
            log.append({"step": step, "epoch": epoch + 1, "loss": total * scale})
    return log


def slot_accuracy(mlp: DeactivationMlp, fixtures: list[SlotFixture]) -> float:
    """Fraction of slots whose binarized lambda agrees with the fg/bg flag."""
    correct = 0
    total = 0
    for fixture in fixtures:
        lam = deactivate(mlp, fixture.slots.z)
        correct += int(((lam > 0.5) == fixture.fg_flags).sum())
        total += fixture.fg_flags.size
    return correct / total


def predict_instances(mlp: DeactivationMlp, fixture: SlotFixture):
    """Inference-time instance map: binarized deactivation over the fixture."""
    lam = deactivate(mlp, fixture.slots.z)
    return apply_deactivation(fixture.slots.m, lam, binarize=True)


# --- Fixture sets --------------------------------------------------------------


def build_fixture_scenes(
    n_images: int,
    width: int = 64,
    height: int = 64,
    seed: int = 0,
    n_static: int = 0,
    min_objects: int = 2,
    max_objects: int = 4,
    mover_size: tuple[int, int] = (10, 18),
    static_size: tuple[int, int] = (10, 18),
) -> list[SceneSpec]:
    """Deterministic set of non-overlapping rectangle scenes for training
    fixtures. ``n_static`` adds zero-velocity objects per scene (the
    static-duplicate case for the drop gate); their size range is separate
    because the background regularizer's pull scales with their area."""
    rng = np.random.default_rng(seed)
    scenes = []
    for _ in range(n_images):
        n_obj = int(rng.integers(min_objects, max_objects + 1))
        rects: list[tuple[int, int, int, int]] = []
        attempts = 0
        while len(rects) < n_obj + n_static and attempts < 1000:
            attempts += 1
            lo, hi = mover_size if len(rects) < n_obj else static_size
            w = int(rng.integers(lo, hi))
            h = int(rng.integers(lo, hi))
            x = int(rng.integers(1, width - w - 1))
            y = int(rng.integers(1, height - h - 1))
            if all(x + w + 1 < rx or rx + rw + 1 < x or y + h + 1 < ry or rh + ry + 1 < y for rx, ry, rw, rh in rects):
                rects.append((x, y, w, h))
        objects = []
        for i, (x, y, w, h) in enumerate(rects):
            if i < n_obj:
                angle = rng.uniform(0, 2 * np.pi)
                speed = rng.uniform(5.0, 12.0)
                vel = (float(speed * np.cos(angle)), float(speed * np.sin(angle)))
            else:
                vel = (0.0, 0.0)
            objects.append(ObjectSpec("rect", (x, y), (w, h), vel))
        scenes.append(SceneSpec(width=width, height=height, objects=tuple(objects), seed=int(rng.integers(2**31))))
    return scenes


def build_fixture_set(
    scenes: list[SceneSpec],
    k: int,
    slot_dim: int = 32,
    separation: float = 6.0,
    seed: int = 0,
) -> list[SlotFixture]:
    return [
        make_slot_fixture(spec, k=k, slot_dim=slot_dim, separation=separation, seed=seed + i)
        for i, spec in enumerate(scenes)
    ]


# --- Stage-1 toy head -----------------------------------------------------------


def stage1_loss_and_grads(head: ToyMaskHead, features: np.ndarray, instances: list[BinaryMask]):
    """Mean weighted BCE over Hungarian-matched (slot mask, instance) pairs,
    with gradients through the per-pixel softmax into the head parameters."""
    alpha = head.forward(features)
    m = softmax_masks(alpha)
    match = match_masks(m, instances)
    d_m = np.zeros_like(m)
    total = 0.0
    for slot, inst in match.pairs:
        loss, grad = wbce(m[slot], instances[inst])
        total += loss
        d_m[slot] += grad
    n = max(len(match.pairs), 1)
    total /= n
    d_m /= n
    d_w, d_b = head.backward(features, m, d_m)
    return total, (d_w, d_b)


def train_toy_head(
    head: ToyMaskHead,
    features: np.ndarray,
    instances: list[BinaryMask],
    steps: int,
    lr: float,
) -> list[float]:
    state = AdamState.for_params([head.weight, head.bias], lr)
    losses = []
    for _ in range(steps):
        loss, (d_w, d_b) = stage1_loss_and_grads(head, features, instances)
        head.weight, head.bias = adam_step(state, [head.weight, head.bias], [d_w, d_b])
        losses.append(loss)
    return losses


# --- Gradient checks -------------------------------------------------------------


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def _fd_grad(fn, x: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(x, dtype=np.float64)
    flat = out.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = fn(x)
        xf[i] = orig - h
        fm = fn(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2 * h)
    return out


def gradcheck_wbce(rng: np.random.Generator, h: float = 1e-5) -> float:
    shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)))
    p = BinaryMask(rng.random(shape) < 0.5)
    m = rng.uniform(0.2, 0.8, shape)
    _, grad = wbce(m, p)
    numeric = _fd_grad(lambda x: wbce(x, p)[0], m.copy(), h)
    return _rel_err(grad, numeric)


def gradcheck_fg_bg(rng: np.random.Generator, h: float = 1e-5) -> float:
    shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)))
    p = BinaryMask(rng.random(shape) < 0.5)
    m = rng.uniform(0.2, 0.8, shape)
    _, grad = fg_bg_loss(m, p)
    numeric = _fd_grad(lambda x: fg_bg_loss(x, p)[0], m.copy(), h)
    return _rel_err(grad, numeric)


def gradcheck_mlp(rng: np.random.Generator, h: float = 1e-5) -> float:
    """FD check of all parameter gradients and dz on a tiny MLP.

    Instances whose hidden pre-activations sit within 10*h of the ReLU kink
    are redrawn; central differences straddling a kink measure the wrong
    one-sided slope."""
    from .slots import _forward

    while True:
        d_in = int(rng.integers(2, 5))
        mlp = DeactivationMlp.create(d_in, hidden_dim=6, n_layers=3, seed=int(rng.integers(2**31)))
        z = rng.normal(0.0, 1.0, (int(rng.integers(1, 4)), d_in))
        _, (_, preacts) = _forward(mlp, z)
        if all(np.abs(pre).min() > 10 * h for pre in preacts[:-1]):
            break
    upstream = rng.normal(0.0, 1.0, z.shape[0])

    def objective(_x=None) -> float:
        return float(deactivate(mlp, z) @ upstream)

    grads, dz = mlp_backward(mlp, z, upstream)
    worst = 0.0
    # parameters() hands out the live arrays, so perturbing an entry inside
    # _fd_grad is visible to the next forward pass.
    for analytic, p in zip(grads, mlp.parameters()):
        numeric = _fd_grad(objective, p, h)
        worst = max(worst, _rel_err(analytic, numeric))
    worst = max(worst, _rel_err(dz, _fd_grad(objective, z, h)))
    return worst


def run_gradcheck(seed: int = 0, n_instances: int = 100, h: float = 1e-5) -> dict[str, float]:
    """Max relative FD error over randomized instances for each gradient."""
    rng = np.random.default_rng(seed)
    return {
        "wbce": max(gradcheck_wbce(rng, h) for _ in range(n_instances)),
        "fg_bg_loss": max(gradcheck_fg_bg(rng, h) for _ in range(n_instances)),
        "mlp_backward": max(gradcheck_mlp(rng, h) for _ in range(n_instances)),
    }
