"""Adam with decoupled weight decay and a warmup-then-linear-decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NumericAbort(RuntimeError):
    """A gradient or loss went NaN; the step was not applied."""


@dataclass
class AdamState:
    peak_lr: float = 1e-4
    warmup_steps: int = 10_000
    total_steps: int = 500_000
    beta1: float = 0.9
    beta2: float = 0.98
    weight_decay: float = 0.01
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must not exceed total_steps")


def lr_at_step(state: AdamState, step: int | None = None) -> float:
    """Linear ramp to peak_lr over warmup, then linear decay to 0 at total."""
    s = state.step if step is None else step
    if state.warmup_steps > 0 and s < state.warmup_steps:
        return state.peak_lr * s / state.warmup_steps
    tail = state.total_steps - state.warmup_steps
    if tail <= 0:
        return state.peak_lr if s <= state.total_steps else 0.0
    return state.peak_lr * max(0.0, (state.total_steps - s) / tail)


def adam_step(params: dict[str, Tensor], state: AdamState) -> float:
    """One bias-corrected AdamW update over `params` (name -> Tensor).

    Reads each tensor's .grad; tensors with grad None are treated as zero.
    Returns the learning rate used. NaN/inf gradients abort before any
    parameter is touched.
    """
    for name, p in params.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise NumericAbort(f"non-finite gradient in parameter {name!r}")

    state.step += 1
    lr = lr_at_step(state)
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data -= lr * update
    return lr


def zero_grads(params: dict[str, Tensor]):
    for p in params.values():
        p.zero_grad()
