"""Supervised fine-tuning with early stopping, and batched prediction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, NumericError
from .model import Model, instance_normalize, patchify
from .optim import Adam, clip_gradients
from .rng import Rng

log = logging.getLogger(__name__)


@dataclass
class FinetuneConfig:
    lr: float = 1e-5
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 10
    val_frac: float = 0.20
    clip_norm: float = 1.0
    seed: int = 0
    init: str = "pretrained"  # or "random"

    def __post_init__(self):
        if not 0 < self.patience <= self.max_epochs:
            raise ConfigError("need 0 < patience <= max_epochs")
        if self.init not in ("pretrained", "random"):
            raise ConfigError(f"init must be 'pretrained' or 'random', got {self.init!r}")
        if not 0.0 <= self.val_frac < 1.0:
            raise ConfigError("val_frac must lie in [0, 1)")


@dataclass
class FinetuneResult:
    model: Model
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = float("nan")


def stratified_split(labels: np.ndarray, frac: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Indices ``(train, held_out)`` with ``round(frac * n_k)`` of each class held out."""
    held = []
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        idx = idx[rng.permutation(idx.size)]
        held.append(idx[: int(np.floor(frac * idx.size + 0.5))])
    held = np.sort(np.concatenate(held)) if held else np.empty(0, dtype=np.int64)
    train = np.setdiff1d(np.arange(labels.size), held)
    return train, held


def predict(model: Model, x_raw, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels, probs)``; ties go to the lowest class index."""
    x = np.asarray(x_raw)
    probs = []
    with T.no_grad():
        for s in range(0, x.shape[0], batch_size):
            probs.append(T.softmax_lastaxis(model.logits(x[s : s + batch_size])).data)
    p = np.concatenate(probs) if probs else np.empty((0, model.config.n_classes))
    return np.argmax(p, axis=-1), p


def probs_from_logits(logits) -> tuple[int, np.ndarray]:
    """Single-instance helper: ``(label, probs)`` from a logit vector."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    p = e / e.sum()
    return int(np.argmax(p)), p


def _accuracy(model: Model, patches: np.ndarray, labels: np.ndarray, batch_size: int) -> float:
    if labels.size == 0:
        return float("nan")
    correct = 0
    with T.no_grad():
        for s in range(0, labels.size, batch_size):
            logits = model.classify(model.encode_patches(patches[s : s + batch_size]))
            correct += int((np.argmax(logits.data, axis=-1) == labels[s : s + batch_size]).sum())
    return correct / labels.size


def finetune(model: Model, windows, labels, cfg: FinetuneConfig) -> FinetuneResult:
    """Full fine-tuning with cross-entropy; keeps the parameters of the best validation epoch."""
    mc = model.config
    x = np.asarray(getattr(windows, "windows", windows))
    y = np.asarray(labels if labels is not None else windows.labels, dtype=np.int64)
    if x.shape[0] != y.size:
        raise DataError(f"{x.shape[0]} windows but {y.size} labels")
    if y.size and (y.min() < 0 or y.max() >= mc.n_classes):
        raise DataError(f"labels must lie in [0, {mc.n_classes})")

    rng = Rng(cfg.seed)
    split_rng, order_rng, drop_rng = rng.split(), rng.split(), rng.split()
    tr, va = stratified_split(y, cfg.val_frac, split_rng)
    if np.unique(y[tr]).size < mc.n_classes:
        raise DataError(
            f"training split has {np.unique(y[tr]).size} distinct labels, {mc.n_classes} required"
        )
    patches = patchify(instance_normalize(x, mc.eps_norm)[0], mc.patch_len)
    p_tr, y_tr, p_va, y_va = patches[tr], y[tr], patches[va], y[va]

    opt = Adam(model.params)
    params = list(model.params.values())
    result = FinetuneResult(model)
    best_state = model.state_dict()
    best = -1.0
    wait = 0
    step = 0
    for epoch in range(cfg.max_epochs):
        order = order_rng.permutation(y_tr.size)
        losses = []
        for s in range(0, y_tr.size, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            try:
                opt.zero_grad()
                logits = model.classify(model.encode_patches(p_tr[idx], rng=drop_rng))
                loss = T.cross_entropy(logits, y_tr[idx])
                loss.backward()
                clip_gradients(params, cfg.clip_norm)
                opt.step(cfg.lr)
            except NumericError as exc:
                raise NumericError(f"fine-tuning diverged at step {step}: {exc}") from exc
            losses.append(loss.item())
            step += 1
        if y_va.size:
            val_acc = _accuracy(model, p_va, y_va, 256)
        else:
            val_acc = _accuracy(model, p_tr, y_tr, 256)
        result.history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_acc": val_acc})
        log.info("finetune epoch %d: loss %.4f val_acc %.4f", epoch, np.mean(losses), val_acc)
        if val_acc > best:
            best, wait = val_acc, 0
            best_state = model.state_dict()
            result.best_epoch = epoch
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    model.load_state_dict(best_state)
    result.best_val_acc = best
    return result
