"""Dual-attention patch transformer for multivariate windows.

Data flow for one batch ``[B, C, L]``::

    instance_normalize -> patchify [B, C, N, P] -> linear P->d
    -> + sinusoidal table (shared by every channel)
    -> encoder layers [B, C, N, d] -> reconstruction head [B, C, N, P]
                                    -> mean over N, flatten, linear -> [B, K]

Each encoder layer runs one multi-head attention parameter set twice: along
the patch axis for every channel, then (after swapping axes) along the
channel axis for every patch.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .rng import Rng
from .tensor import Tensor


@dataclass
class ModelConfig:
    n_channels: int = 9
    window_len: int = 512
    patch_len: int = 16
    d_model: int = 256
    n_layers: int = 4
    n_heads: int = 0  # 0 -> d_model // 32
    d_ff: int = 0  # 0 -> 4 * d_model
    n_classes: int = 4
    dropout: float = 0.1
    channel_attention: bool = True
    mask_ratio: float = 0.30
    eps_norm: float = 1e-5
    positional: bool = True

    def __post_init__(self):
        if self.n_heads == 0:
            self.n_heads = max(1, self.d_model // 32)
        if self.d_ff == 0:
            self.d_ff = 4 * self.d_model
        self.validate()

    @property
    def n_patches(self) -> int:
        return self.window_len // self.patch_len

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def validate(self) -> None:
        if self.n_channels < 1 or self.window_len < 2 or self.patch_len < 1:
            raise ConfigError("n_channels >= 1, window_len >= 2 and patch_len >= 1 are required")
        if self.window_len % self.patch_len:
            raise ConfigError(f"patch_len {self.patch_len} does not divide window_len {self.window_len}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if self.positional and self.d_model % 2:
            raise ConfigError(f"sinusoidal positions need an even d_model, got {self.d_model}")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError("mask_ratio must lie in (0, 1)")
        if self.eps_norm <= 0:
            raise ConfigError("eps_norm must be positive")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config key(s): {sorted(unknown)}")
        return cls(**d)


PRESETS: dict[str, dict[str, Any]] = {
    "3M16P": dict(n_layers=4, d_model=256, patch_len=16),
    "3M8P": dict(n_layers=4, d_model=256, patch_len=8),
    "3M4P": dict(n_layers=4, d_model=256, patch_len=4),
    "25M16P": dict(n_layers=8, d_model=512, patch_len=16),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ModelConfig(**{**PRESETS[name], **overrides})


def count_params(config: ModelConfig) -> int:
    """Closed-form trainable parameter count."""
    d, ff, p = config.d_model, config.d_ff, config.patch_len
    norms = 3 if config.channel_attention else 2
    per_layer = 4 * d * d + 2 * d * ff + norms * 2 * d
    embed = p * d + d
    recon = d * p + p
    cls = config.n_channels * d * config.n_classes + config.n_classes
    return config.n_layers * per_layer + embed + recon + cls


# -- stateless pieces ------------------------------------------------------

def instance_normalize(x: np.ndarray, eps: float = 1e-5) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Standardise every channel of every window over its time axis.

    ``x`` is ``[..., C, L]``. The returned stats are informational only.
    """
    x = np.asarray(x)
    if x.shape[-1] < 2:
        raise DimensionError(f"instance_normalize needs L >= 2, got shape {x.shape}")
    xd = x.astype(np.float64)
    mean = xd.mean(axis=-1, keepdims=True)
    std = np.sqrt(xd.var(axis=-1, keepdims=True) + eps)
    out = ((xd - mean) / std).astype(T.get_default_dtype())
    return out, {"mean": mean[..., 0], "std": std[..., 0]}


def patchify(x, patch_len: int):
    """``[..., C, L] -> [..., C, L // P, P]`` with consecutive non-overlapping segments."""
    shape = x.shape
    if shape[-1] % patch_len:
        raise ConfigError(f"patch_len {patch_len} does not divide length {shape[-1]}")
    new = shape[:-1] + (shape[-1] // patch_len, patch_len)
    if isinstance(x, Tensor):
        return T.reshape(x, new)
    return np.asarray(x).reshape(new)


def positional_encoding(n_pos: int, d: int) -> np.ndarray:
    if d % 2:
        raise ConfigError(f"positional encoding needs an even width, got {d}")
    pos = np.arange(n_pos, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    table = np.empty((n_pos, d))
    table[:, 0::2] = np.sin(pos / freq)
    table[:, 1::2] = np.cos(pos / freq)
    return table


def _swap_last2(x: Tensor) -> Tensor:
    n = x.ndim
    return T.transpose(x, tuple(range(n - 2)) + (n - 1, n - 2))


def attention(q: Tensor, k: Tensor, v: Tensor, weights_out: list | None = None) -> Tensor:
    """Scaled dot-product attention over the second-to-last axis."""
    scores = T.mul_scalar(T.matmul(q, _swap_last2(k)), 1.0 / math.sqrt(q.shape[-1]))
    w = T.softmax_lastaxis(scores)
    if weights_out is not None:
        weights_out.append(w.data)
    return T.matmul(w, v)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    lead = x.shape[:-2]
    n, d = x.shape[-2:]
    x = T.reshape(x, lead + (n, n_heads, d // n_heads))
    k = len(lead)
    return T.transpose(x, tuple(range(k)) + (k + 1, k, k + 2))


def _merge_heads(x: Tensor) -> Tensor:
    lead = x.shape[:-3]
    h, n, dh = x.shape[-3:]
    k = len(lead)
    x = T.transpose(x, tuple(range(k)) + (k + 1, k, k + 2))
    return T.reshape(x, lead + (n, h * dh))


def multi_head_attention(
    x: Tensor,
    w_q: Tensor,
    w_k: Tensor,
    w_v: Tensor,
    w_o: Tensor,
    n_heads: int,
    weights_out: list | None = None,
) -> Tensor:
    """Self-attention over axis -2 of ``x[..., n_tok, d]``; head ``i`` uses column block ``i``."""
    d = x.shape[-1]
    if d % n_heads:
        raise ConfigError(f"width {d} is not divisible by {n_heads} heads")
    q = _split_heads(T.matmul(x, w_q), n_heads)
    k = _split_heads(T.matmul(x, w_k), n_heads)
    v = _split_heads(T.matmul(x, w_v), n_heads)
    heads = attention(q, k, v, weights_out)
    return T.matmul(_merge_heads(heads), w_o)


def _norm(x: Tensor, p: dict[str, Tensor], name: str, eps: float) -> Tensor:
    return T.layer_norm(x, p[f"{name}.gamma"], p[f"{name}.beta"], eps)


def encoder_layer(
    x: Tensor,
    p: dict[str, Tensor],
    n_heads: int,
    channel_attention: bool = True,
    dropout: float = 0.0,
    rng: Rng | None = None,
    eps: float = 1e-5,
    trace: dict | None = None,
) -> Tensor:
    """One post-norm layer on ``[B, C, N, d]``.

    ``p`` maps local names (``attn.w_q``, ``norm1.gamma``, ...) to tensors.
    ``trace``, when given, collects the attention weights of each sublayer.
    """
    wts = (p["attn.w_q"], p["attn.w_k"], p["attn.w_v"], p["attn.w_o"])
    t_w = trace.setdefault("temporal", []) if trace is not None else None
    h = multi_head_attention(x, *wts, n_heads, t_w)
    x = _norm(x + T.dropout(h, dropout, rng), p, "norm1", eps)
    if channel_attention:
        c_w = trace.setdefault("channel", []) if trace is not None else None
        xt = T.transpose(x, (0, 2, 1, 3))
        h = multi_head_attention(xt, *wts, n_heads, c_w)
        h = T.transpose(h, (0, 2, 1, 3))
        x = _norm(x + T.dropout(h, dropout, rng), p, "norm_ch", eps)
    h = T.matmul(T.gelu(T.matmul(x, p["ffn.w1"])), p["ffn.w2"])
    return _norm(x + T.dropout(h, dropout, rng), p, "norm2", eps)


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    y = T.matmul(x, w)
    return y + T.expand(b, y.shape)


class Model:
    """Parameters plus forward passes. Parameters live in ``self.params`` by canonical name."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = Rng(seed)
        c = config
        d, ff = c.d_model, c.d_ff

        def linear(name, fan_in, fan_out):
            bound = 1.0 / math.sqrt(fan_in)
            self.params[name] = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True)

        def zeros(name, n):
            self.params[name] = Tensor(np.zeros(n), requires_grad=True)

        def norm(name):
            self.params[f"{name}.gamma"] = Tensor(np.ones(d), requires_grad=True)
            zeros(f"{name}.beta", d)

        linear("embed.weight", c.patch_len, d)
        zeros("embed.bias", d)
        for i in range(c.n_layers):
            pre = f"layers.{i}."
            for w in ("w_q", "w_k", "w_v", "w_o"):
                linear(pre + "attn." + w, d, d)
            norm(pre + "norm1")
            if c.channel_attention:
                norm(pre + "norm_ch")
            linear(pre + "ffn.w1", d, ff)
            linear(pre + "ffn.w2", ff, d)
            norm(pre + "norm2")
        linear("recon.weight", d, c.patch_len)
        zeros("recon.bias", c.patch_len)
        linear("cls.weight", c.n_channels * d, c.n_classes)
        zeros("cls.bias", c.n_classes)
        self._pos_cache: dict = {}

    # -- bookkeeping -------------------------------------------------------
    def num_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def layer_params(self, i: int) -> dict[str, Tensor]:
        pre = f"layers.{i}."
        return {k[len(pre):]: v for k, v in self.params.items() if k.startswith(pre)}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        missing = set(self.params) - set(state)
        unexpected = set(state) - set(self.params)
        if missing or (strict and unexpected):
            raise ConfigError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for k, p in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ConfigError(f"parameter {k}: shape {arr.shape} != expected {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def positional_table(self) -> Tensor:
        key = T.get_default_dtype()
        if key not in self._pos_cache:
            c = self.config
            self._pos_cache[key] = Tensor(positional_encoding(c.n_patches, c.d_model))
        return self._pos_cache[key]

    # -- forward -----------------------------------------------------------
    def embed(self, patches: Tensor) -> Tensor:
        x = _affine(patches, self.params["embed.weight"], self.params["embed.bias"])
        if self.config.positional:
            x = x + T.expand(self.positional_table(), x.shape)
        return x

    def encode_patches(self, patches, rng: Rng | None = None, trace: dict | None = None) -> Tensor:
        """``[B, C, N, P]`` (already normalised, possibly masked) -> latent ``[B, C, N, d]``."""
        c = self.config
        patches = T.as_tensor(patches)
        if patches.ndim != 4 or patches.shape[1:] != (c.n_channels, c.n_patches, c.patch_len):
            raise DimensionError(
                f"expected patches [B, {c.n_channels}, {c.n_patches}, {c.patch_len}], got {patches.shape}"
            )
        x = self.embed(patches)
        drop = c.dropout if rng is not None else 0.0
        for i in range(c.n_layers):
            x = encoder_layer(
                x, self.layer_params(i), c.n_heads, c.channel_attention, drop, rng, c.eps_norm, trace
            )
        return x

    def normalize_windows(self, x_raw) -> np.ndarray:
        c = self.config
        x = np.asarray(x_raw.data if isinstance(x_raw, Tensor) else x_raw)
        if x.ndim != 3 or x.shape[1:] != (c.n_channels, c.window_len):
            raise DimensionError(f"expected windows [B, {c.n_channels}, {c.window_len}], got {x.shape}")
        return instance_normalize(x, c.eps_norm)[0]

    def encode(self, x_raw, rng: Rng | None = None) -> Tensor:
        """Raw windows ``[B, C, L]`` -> latent ``[B, C, N, d]``."""
        xn = self.normalize_windows(x_raw)
        return self.encode_patches(patchify(xn, self.config.patch_len), rng)

    def reconstruct(self, z: Tensor) -> Tensor:
        return _affine(z, self.params["recon.weight"], self.params["recon.bias"])

    def classify(self, z: Tensor) -> Tensor:
        pooled = T.mean_axis(z, axis=2)
        flat = T.reshape(pooled, (pooled.shape[0], pooled.shape[1] * pooled.shape[2]))
        return _affine(flat, self.params["cls.weight"], self.params["cls.bias"])

    def logits_normalized(self, xn, rng: Rng | None = None) -> Tensor:
        """Logits from already instance-normalised windows ``[B, C, L]`` (a Tensor keeps the graph)."""
        return self.classify(self.encode_patches(patchify(T.as_tensor(xn), self.config.patch_len), rng))

    def logits(self, x_raw, rng: Rng | None = None) -> Tensor:
        return self.classify(self.encode(x_raw, rng))
