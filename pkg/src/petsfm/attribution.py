"""Integrated-gradient attributions and their per-channel aggregate.

Attributions are taken with respect to the instance-normalised input and
against softmax outputs, so for each class the attributions sum (up to the
Riemann error) to ``f_k(x) - f_k(baseline)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import plots
from . import tensor as T
from .errors import DataError, DimensionError
from .model import Model
from .rng import Rng
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class AttributionMap:
    phi: np.ndarray  # [C, L, K]
    steps: int
    baseline: str
    f_x: np.ndarray  # [K]
    f_baseline: np.ndarray  # [K]

    @property
    def residual(self) -> np.ndarray:
        """Relative completeness error per class."""
        gap = self.f_x - self.f_baseline
        return np.abs(self.phi.sum(axis=(0, 1)) - gap) / (np.abs(gap) + 1e-9)


@dataclass
class GlobalImportance:
    phi: np.ndarray  # [C]
    n_samples: int
    channels: tuple[str, ...] = ()

    def ranking(self) -> list[tuple[str, float]]:
        names = self.channels or tuple(f"ch{i}" for i in range(self.phi.size))
        order = sorted(range(self.phi.size), key=lambda i: (-self.phi[i], i))
        return [(names[i], float(self.phi[i])) for i in order]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["channel", "importance"])
            for name, v in self.ranking():
                w.writerow([name, repr(v)])

    def write_svg(self, path) -> None:
        ranked = self.ranking()
        Path(path).write_text(plots.bars([n for n, _ in ranked], [v for _, v in ranked], "Mean |attribution| per channel"))


def softmax_output(model: Model) -> Callable[[Tensor], Tensor]:
    """``[B, C, L]`` normalised windows -> class probabilities ``[B, K]``."""

    def f(x: Tensor) -> Tensor:
        return T.softmax_lastaxis(model.logits_normalized(x))

    return f


def integrated_gradients(model, x, baseline=None, steps: int = 32, chunk: int = 64) -> AttributionMap:
    """Attributions ``phi[c, t, k]`` for one normalised window ``x`` of shape ``[C, L]``.

    ``model`` is either a :class:`Model` (attributed through its softmax) or
    any callable mapping a ``[B, C, L]`` Tensor to a ``[B, K]`` Tensor.
    The path integral is a right Riemann sum with ``steps`` points, evaluated
    ``chunk`` points per batch.
    """
    if steps < 1 or chunk < 1:
        raise ValueError("steps and chunk must be >= 1")
    f = softmax_output(model) if isinstance(model, Model) else model
    x = np.asarray(x, dtype=T.get_default_dtype())
    base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=x.dtype)
    if base.shape != x.shape:
        raise DimensionError(f"baseline shape {base.shape} != input shape {x.shape}")
    if x.ndim != 2:
        raise DimensionError(f"expected one window [C, L], got {x.shape}")

    alphas = (np.arange(1, steps + 1, dtype=x.dtype) / steps)[:, None, None]
    path = base[None] + alphas * (x - base)[None]
    with T.no_grad():
        ends = f(Tensor(np.stack([base, x]))).numpy()
    n_classes = ends.shape[1]

    grads = np.zeros((n_classes,) + x.shape, dtype=np.float64)
    for s in range(0, steps, chunk):
        for k in range(n_classes):
            inp = Tensor(path[s : s + chunk], requires_grad=True)
            out = f(inp)
            T.sum_all(T.slice_(out, (slice(None), slice(k, k + 1)))).backward()
            grads[k] += inp.grad.sum(axis=0)
    grads /= steps
    phi = (x - base)[:, :, None] * np.moveaxis(grads, 0, -1)
    label = "zeros" if baseline is None else "custom"
    return AttributionMap(phi, steps, label, ends[1].astype(np.float64), ends[0].astype(np.float64))


def aggregate(maps: Sequence[AttributionMap], channels: Sequence[str] = ()) -> GlobalImportance:
    """Per instance ``mean_{t,k} |phi|`` per channel, then the mean over instances."""
    if not maps:
        raise DataError("aggregate needs at least one attribution map")
    shape = maps[0].phi.shape
    if any(m.phi.shape != shape for m in maps):
        raise DimensionError("attribution maps have inconsistent shapes")
    per = np.stack([np.abs(m.phi).mean(axis=(1, 2)) for m in maps])
    return GlobalImportance(per.mean(axis=0), len(maps), tuple(channels))


def importance_report(
    model: Model,
    windows,
    n_samples: int = 100,
    steps: int = 32,
    seed: int = 0,
    channels: Sequence[str] = (),
) -> tuple[GlobalImportance, list[AttributionMap]]:
    """Attribute ``n_samples`` random raw windows against a zero baseline in normalised space."""
    windows = np.asarray(windows)
    n = len(windows)
    if n == 0:
        raise DataError("no windows to attribute")
    if n < n_samples:
        log.warning("only %d windows available, attributing all of them (asked for %d)", n, n_samples)
        n_samples = n
    idx = np.sort(Rng(seed).permutation(n)[:n_samples])
    xn = model.normalize_windows(windows[idx])
    maps = [integrated_gradients(model, xn[i], steps=steps) for i in range(n_samples)]
    return aggregate(maps, channels), maps
