"""Adam, global-norm clipping and the warm-up cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .tensor import Tensor


def lr_schedule(step: int, total_steps: int, lr_start: float, lr_peak: float, lr_end: float,
                warmup_frac: float = 0.10) -> float:
    """Linear warm-up from ``lr_start`` to ``lr_peak``, then cosine decay to ``lr_end``.

    The warm-up lasts ``round(warmup_frac * total_steps)`` steps; the cosine
    reaches ``lr_end`` exactly at ``step == total_steps - 1``.
    """
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    warmup = int(math.floor(warmup_frac * total_steps + 0.5))
    if step < warmup:
        return lr_start + (lr_peak - lr_start) * step / warmup
    span = total_steps - 1 - warmup
    if span <= 0:
        return lr_peak
    t = (step - warmup) / span
    return lr_end + 0.5 * (lr_peak - lr_end) * (1.0 + math.cos(math.pi * t))


def global_grad_norm(params: Iterable[Tensor]) -> float:
    sq = 0.0
    for p in params:
        if p.grad is not None:
            sq += float(np.sum(p.grad.astype(np.float64) ** 2))
    return math.sqrt(sq)


def clip_gradients(params: Iterable[Tensor], clip_norm: float) -> float:
    """Rescale grads in place so their global L2 norm is at most ``clip_norm``.

    Returns the norm before clipping.
    """
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    params = list(params)
    norm = global_grad_norm(params)
    if norm > clip_norm:
        scale = clip_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * p.grad.dtype.type(scale)
    return norm


@dataclass
class Adam:
    params: dict[str, Tensor]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data = p.data.astype(m.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
