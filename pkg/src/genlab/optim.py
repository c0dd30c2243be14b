"""Adam for the GAN players, SGD with cosine decay for independent critics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    pass


def _check_finite(params: Sequence[Tensor]) -> None:
    for i, p in enumerate(params):
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(
                f"non-finite gradient in parameter {p.name or i} (shape {p.shape})"
            )


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update, in place. Parameters without a
    gradient are treated as having a zero gradient."""
    _check_finite(params)
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad if p.grad is not None else 0.0
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class CosineSchedule:
    base_lr: float
    total_steps: int
    floor_lr: float = 0.0


def cosine_lr(sched: CosineSchedule, step: int) -> float:
    """floor + (base - floor) * (1 + cos(pi * step / total)) / 2, step clamped."""
    if sched.total_steps <= 0:
        return sched.floor_lr
    s = min(max(step, 0), sched.total_steps)
    frac = (1.0 + math.cos(math.pi * s / sched.total_steps)) / 2.0
    return sched.floor_lr + (sched.base_lr - sched.floor_lr) * frac


def sgd_step(params: Sequence[Tensor], lr: float) -> None:
    _check_finite(params)
    for p in params:
        if p.grad is not None:
            p.data = p.data - lr * p.grad
