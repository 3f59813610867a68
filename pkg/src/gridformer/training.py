"""Two-stage optimization: uniform-sampling BCE, then boundary-restricted
margin BCE finetuning, both with Adam.

The whole loop is a pure function of (dataset bytes, config, seed): batching,
initialization, and accumulation order are all fixed.
"""

from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .tensorcore import Tape, Tensor
from .model import decode, encode, zero_grads

CLAMP_EPS = 1e-7


@dataclass
class TrainConfig:
    stage1_lr: float = 1e-4
    stage2_lr: float = 1e-6
    margin: float = 2.0
    boundary_radius: float = 0.08
    batch_points: int = 2048
    stage1_steps: int = 2000
    stage2_steps: int = 200
    plateau_window: int = 100
    plateau_tol: float = 1e-5
    clip_norm: float = 0.0      # 0 disables the safety rail
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    stage2_uniform_mix: float = 0.0  # fraction of non-boundary samples mixed in

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.stage1_lr <= 0 or self.stage2_lr <= 0:
            raise ValueError("learning rates must be > 0")


def bce_loss(p_hat, labels):
    """Mean binary cross-entropy; probabilities clamped away from {0, 1}."""
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary")
    p_hat = tc.as_tensor(p_hat)
    l = labels.astype(p_hat.data.dtype)
    pc = tc.clamp(p_hat, CLAMP_EPS, 1.0 - CLAMP_EPS)
    ones = Tensor(np.ones_like(pc.data))
    term = tc.add(
        tc.mul(Tensor(l), tc.log(pc)),
        tc.mul(Tensor(1.0 - l), tc.log(tc.sub(ones, pc))),
    )
    return tc.scale(tc.tmean(term), -1.0)


def margin_logits(logits, labels, margin):
    """Shift logits against the label by the margin: o - m*(2l - 1)."""
    labels = np.asarray(labels)
    shift = margin * (labels.astype(np.float64) * 2.0 - 1.0)
    return tc.sub(logits, Tensor(shift.astype(logits.data.dtype)))


def margin_probability(logits, labels, margin):
    """Sigmoid of the margin-shifted logits (reduces to plain sigmoid at m=0)."""
    return tc.sigmoid(margin_logits(logits, labels, margin))


def init_adam_state(params):
    return {
        "t": 0,
        "m": {k: np.zeros_like(v.data) for k, v in params.items()},
        "v": {k: np.zeros_like(v.data) for k, v in params.items()},
    }


def adam_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=0.0):
    """Standard bias-corrected Adam update on every parameter's .grad."""
    grads = {}
    for name, t in params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        grads[name] = np.asarray(g, dtype=np.float64)
    if clip_norm > 0.0:
        total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if total > clip_norm:
            factor = clip_norm / total
            grads = {k: g * factor for k, g in grads.items()}
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data -= (lr * update).astype(p.data.dtype)
    return state


def _loss_step(points, queries, labels, model_cfg, params, margin):
    """Forward + backward for one batch; returns the scalar loss value."""
    zero_grads(params)
    with Tape() as tape:
        field = encode(points, model_cfg, params)
        logits = decode(field, queries, model_cfg, params)
        if margin > 0.0:
            probs = margin_probability(logits, labels, margin)
        else:
            probs = tc.sigmoid(logits)
        loss = bce_loss(probs, labels)
        tape.backward(loss)
        value = loss.item()
        tape.clear()
    return value


class _EpochSampler:
    """Seeded without-replacement batching; reshuffles each epoch."""

    def __init__(self, indices, batch, seed):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.batch = min(batch, len(self.indices))
        self.rng = np.random.default_rng(seed)
        self._order = self.rng.permutation(self.indices)
        self._pos = 0

    def next_batch(self):
        if self._pos + self.batch > len(self._order):
            self._order = self.rng.permutation(self.indices)
            self._pos = 0
        out = self._order[self._pos:self._pos + self.batch]
        self._pos += self.batch
        return out


def _plateaued(losses, window, tol):
    if len(losses) < 2 * window:
        return False
    now = float(np.mean(losses[-window:]))
    prev = float(np.mean(losses[-2 * window:-window]))
    return prev - now < tol


def _run_stage(points, qs_coords, qs_labels, indices, model_cfg, params, cfg,
               lr, margin, max_steps, stage, seed):
    old_dtype = tc.get_default_dtype()
    tc.set_default_dtype(np.float32 if model_cfg.precision == "f32" else np.float64)
    try:
        sampler = _EpochSampler(indices, cfg.batch_points, seed)
        state = init_adam_state(params)
        trace = []
        losses = []
        for step in range(max_steps):
            batch = sampler.next_batch()
            loss = _loss_step(points, qs_coords[batch], qs_labels[batch],
                              model_cfg, params, margin)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss {loss} at stage {stage} step {step}"
                )
            adam_step(params, state, lr, cfg.beta1, cfg.beta2, cfg.eps,
                      cfg.clip_norm)
            trace.append((step, stage, loss, lr))
            losses.append(loss)
            if _plateaued(losses, cfg.plateau_window, cfg.plateau_tol):
                break
        return trace
    finally:
        tc.set_default_dtype(old_dtype)


def train_stage1(points, queryset, model_cfg, params, cfg: TrainConfig):
    """Uniform-sampling BCE training to plateau or the step budget."""
    indices = np.arange(len(queryset.coords))
    return _run_stage(points, queryset.coords, queryset.labels, indices,
                      model_cfg, params, cfg, cfg.stage1_lr, 0.0,
                      cfg.stage1_steps, 1, cfg.seed)


def train_stage2(points, queryset, model_cfg, params, cfg: TrainConfig):
    """Margin-BCE finetuning restricted to boundary-masked queries."""
    boundary = np.flatnonzero(queryset.boundary_mask)
    if len(boundary) == 0:
        raise ValueError("stage 2 requires a non-empty boundary subset")
    indices = boundary
    if cfg.stage2_uniform_mix > 0.0:
        rng = np.random.default_rng(cfg.seed + 1)
        others = np.flatnonzero(~queryset.boundary_mask)
        extra = int(round(cfg.stage2_uniform_mix * len(boundary)))
        if extra and len(others):
            indices = np.concatenate(
                [boundary, rng.choice(others, size=min(extra, len(others)),
                                      replace=False)]
            )
    return _run_stage(points, queryset.coords, queryset.labels, indices,
                      model_cfg, params, cfg, cfg.stage2_lr, cfg.margin,
                      cfg.stage2_steps, 2, cfg.seed + 1000)


def write_loss_trace(path, trace):
    """Tab-separated records: step, stage, loss, learning rate."""
    with open(path, "w") as f:
        for step, stage, loss, lr in trace:
            f.write(f"{step}\t{stage}\t{loss:.10g}\t{lr:.10g}\n")
