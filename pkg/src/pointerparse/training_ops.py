"""Loss, learning-rate schedule, and optimizer arithmetic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Tensor, constant, log_softmax, mul, reduce_sum, scale, add


class GoldOutOfRange(ValueError):
    pass


class NonFiniteGradient(RuntimeError):
    pass


def noam_lr(step: int, d_model: int, warmup: int) -> float:
    """lr = d_model^-0.5 * min(step^-0.5, step * warmup^-1.5); rises linearly
    for ``warmup`` steps, then decays with inverse square root."""
    if step < 1:
        raise ValueError("noam schedule is defined for step >= 1")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


def label_smoothed_ce(
    logits: Tensor,
    gold: np.ndarray,
    step_mask: np.ndarray,
    support_mask: np.ndarray,
    epsilon: float,
    per_example: bool = False,
) -> Tensor:
    """Mean over real target steps of
    ``(1-eps) * (-log p_gold) + eps * mean_{k in support}(-log p_k)``.

    The smoothing support is each example's full joint outcome set (parse
    symbols plus its in-range pointers) minus PAD; padded target steps are
    excluded from the mean.  Numerically asserts the cross-entropy lower
    bound: the loss can never drop below the entropy of the smoothed target.
    """
    gold = np.asarray(gold)
    step_mask = np.asarray(step_mask, dtype=bool)
    support_mask = np.asarray(support_mask, dtype=bool)
    batch, steps, width = logits.shape
    if gold.min() < 0 or gold.max() >= width:
        raise GoldOutOfRange(f"gold ids must be in [0, {width})")
    if not np.all(support_mask[np.arange(batch)[:, None], gold] | ~step_mask):
        raise GoldOutOfRange("a gold id falls outside its example's support")

    logp = log_softmax(logits)
    onehot = np.zeros((batch, steps, width), dtype=np.float32)
    np.put_along_axis(onehot, gold[:, :, None], 1.0, axis=2)
    nll = scale(reduce_sum(mul(logp, constant(onehot)), axis=2), -1.0)  # [B, T]

    counts = support_mask.sum(axis=1)  # [B]
    smooth_sum = reduce_sum(mul(logp, constant(support_mask[:, None, :].astype(np.float32))), axis=2)
    smooth = mul(smooth_sum, constant(np.float32(-1.0) / counts[:, None].astype(np.float32)))

    per_step = add(scale(nll, 1.0 - epsilon), scale(smooth, epsilon))
    masked = mul(per_step, constant(step_mask.astype(np.float32)))
    steps_per_example = step_mask.sum(axis=1)
    if per_example:
        loss = mul(
            reduce_sum(masked, axis=1),
            constant(1.0 / np.maximum(steps_per_example, 1).astype(np.float32)),
        )
    else:
        total = int(step_mask.sum())
        loss = scale(reduce_sum(masked), 1.0 / max(total, 1))

    _assert_entropy_floor(loss, counts, steps_per_example, epsilon, per_example)
    return loss


def _assert_entropy_floor(loss, counts, steps_per_example, epsilon, per_example):
    if epsilon <= 0.0:
        return
    k = counts.astype(np.float64)
    q_gold = (1.0 - epsilon) + epsilon / k
    floor = -(q_gold * np.log(q_gold) + (k - 1.0) * (epsilon / k) * np.log(epsilon / k))
    if per_example:
        bound = floor
        values = loss.data
    else:
        bound = float((floor * steps_per_example).sum() / max(steps_per_example.sum(), 1))
        values = loss.data.reshape(())
    assert np.all(values >= bound - 1e-4), "loss fell below the smoothed-entropy floor"


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_grad_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.98,
    eps: float = 1e-9,
    clip_norm: Optional[float] = 1.0,
) -> None:
    """Standard Adam with bias correction; optional global-norm clipping.

    Moments are stored float32 but updated in float64 arithmetic.  Non-finite
    gradients abort the step before any parameter changes.
    """
    for name, p in params.items():
        if p.grad is None:
            p.zero_grad()
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    factor = 1.0
    if clip_norm is not None and clip_norm > 0:
        norm = global_grad_norm(params)
        if norm > clip_norm:
            factor = clip_norm / norm
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        g = p.grad.astype(np.float64) * factor
        m = state.m.get(name)
        v = state.v.get(name)
        m64 = (beta1 * m.astype(np.float64) if m is not None else 0.0) + (1.0 - beta1) * g
        v64 = (beta2 * v.astype(np.float64) if v is not None else 0.0) + (1.0 - beta2) * g * g
        state.m[name] = m64.astype(np.float32)
        state.v[name] = v64.astype(np.float32)
        update = lr * (m64 / bc1) / (np.sqrt(v64 / bc2) + eps)
        p.data = (p.data.astype(np.float64) - update).astype(np.float32)
