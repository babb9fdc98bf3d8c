"""Masked-patch reconstruction pretraining."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericError
from .model import Model, instance_normalize, patchify
from .optim import Adam, clip_gradients, lr_schedule
from .rng import Rng
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    epochs: int = 10
    mask_ratio: float = 0.30
    lr_start: float = 1e-6
    lr_peak: float = 2e-4
    lr_end: float = 1e-7
    warmup_frac: float = 0.10
    batch_size: int = 128
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError("mask_ratio must lie in (0, 1)")
        if not (self.lr_start < self.lr_peak and self.lr_end < self.lr_peak):
            raise ConfigError("lr_start and lr_end must both be below lr_peak")
        if self.epochs < 0 or self.batch_size < 1 or self.clip_norm <= 0:
            raise ConfigError("epochs >= 0, batch_size >= 1 and clip_norm > 0 are required")


def n_masked(ratio: float, n_patches: int) -> int:
    """``round(ratio * n_patches)`` with halves rounded up."""
    return int(math.floor(ratio * n_patches + 0.5))


def sample_mask(batch: int, n_channels: int, n_patches: int, ratio: float, rng: Rng) -> np.ndarray:
    """Boolean ``[B, C, N]`` plan; each (instance, channel) row masks exactly ``round(ratio*N)`` patches."""
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"mask ratio {ratio} outside [0, 1]")
    k = n_masked(ratio, n_patches)
    ranks = np.argsort(np.argsort(rng.random((batch, n_channels, n_patches)), axis=-1), axis=-1)
    return ranks < k


def apply_mask(patches, plan: np.ndarray):
    """Zero masked patches of ``[B, C, N, P]``. Works on arrays and Tensors."""
    keep = (~plan)[..., None]
    if isinstance(patches, Tensor):
        keep = np.broadcast_to(keep, patches.shape).astype(patches.dtype)
        return T.mul(patches, Tensor(keep, dtype=patches.dtype))
    return np.where(keep, patches, 0).astype(np.asarray(patches).dtype)


def masked_loss(recon: Tensor, target, plan: np.ndarray) -> Tensor:
    """Mean over masked patches of the squared L2 patch error; unmasked patches contribute nothing."""
    count = int(plan.sum())
    if count == 0:
        raise ConfigError("masked_loss needs at least one masked patch")
    target = T.as_tensor(target)
    if recon.shape != target.shape or recon.shape[:-1] != plan.shape:
        raise ConfigError(f"shape mismatch: recon {recon.shape}, target {target.shape}, plan {plan.shape}")
    weight = np.broadcast_to(plan[..., None], recon.shape).astype(recon.dtype)
    diff = recon - target
    sq = T.mul(T.mul(diff, diff), Tensor(weight, dtype=recon.dtype))
    return T.mul_scalar(T.sum_all(sq), 1.0 / count)


@dataclass
class PretrainResult:
    model: Model
    history: list[tuple[int, int, float, float]] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)


def _windows(dataset) -> np.ndarray:
    return np.asarray(getattr(dataset, "windows", dataset))


def pretrain(model: Model, dataset, cfg: PretrainConfig) -> PretrainResult:
    """Train encoder + reconstruction head on unlabeled windows ``[n, C, L]``.

    Deterministic for a given ``cfg.seed``. History rows are
    ``(epoch, step, lr, loss)``.
    """
    mc = model.config
    windows = _windows(dataset)
    xn, _ = instance_normalize(windows, mc.eps_norm)
    patches = patchify(xn, mc.patch_len)
    n = patches.shape[0]
    steps_per_epoch = -(-n // cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    result = PretrainResult(model)
    if total == 0:
        return result

    rng = Rng(cfg.seed)
    order_rng, mask_rng, drop_rng = rng.split(), rng.split(), rng.split()
    opt = Adam(model.params)
    params = list(model.params.values())
    step = 0
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            target = patches[idx]
            plan = sample_mask(len(idx), mc.n_channels, mc.n_patches, cfg.mask_ratio, mask_rng)
            lr = lr_schedule(step, total, cfg.lr_start, cfg.lr_peak, cfg.lr_end, cfg.warmup_frac)
            try:
                opt.zero_grad()
                z = model.encode_patches(apply_mask(target, plan), rng=drop_rng)
                loss = masked_loss(model.reconstruct(z), target, plan)
                loss.backward()
                clip_gradients(params, cfg.clip_norm)
                opt.step(lr)
            except NumericError as exc:
                raise NumericError(f"pretraining diverged at step {step}: {exc}") from exc
            losses.append(loss.item())
            result.history.append((epoch, step, lr, loss.item()))
            step += 1
        result.epoch_losses.append(float(np.mean(losses)))
        log.info("pretrain epoch %d: loss %.5f", epoch, result.epoch_losses[-1])
    return result


def write_loss_csv(history, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "step", "lr", "loss"])
        for epoch, step, lr, loss in history:
            w.writerow([epoch, step, repr(float(lr)), repr(float(loss))])

