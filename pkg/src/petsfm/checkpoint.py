"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"PETS1"                     magic
    u32 version
    u32 header_len, header       UTF-8 JSON (sorted keys)
    u32 n_tensors
    per tensor: u16 name_len, name, u8 dtype tag, u8 rank, u32 * rank extents, u64 offset
    payload                      float32 little-endian, offsets relative to payload start

The header carries the model config, channel names, provenance and seed.
Extents are validated against the config before the payload is touched.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .errors import CheckpointError, ConfigError
from .model import Model, ModelConfig

MAGIC = b"PETS1"
VERSION = 1
DTYPE_F32 = 0
_F32 = np.dtype("<f4")


def _header_bytes(header: dict[str, Any]) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode(model: Model, channels=(), provenance: dict | None = None, seed: int | None = None) -> bytes:
    header = {
        "config": model.config.to_dict(),
        "channels": list(channels),
        "channel_attention": bool(model.config.channel_attention),
        "provenance": provenance or {},
        "seed": seed,
    }
    head = _header_bytes(header)
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<II", VERSION, len(head)))
    out.write(head)
    out.write(struct.pack("<I", len(model.params)))
    offset = 0
    blobs = []
    for name, p in model.params.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(p.data, dtype=_F32)
        out.write(struct.pack("<H", len(raw)))
        out.write(raw)
        out.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.write(struct.pack("<Q", offset))
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    for b in blobs:
        out.write(b)
    return out.getvalue()


def save(path, model: Model, channels=(), provenance: dict | None = None, seed: int | None = None) -> None:
    Path(path).write_bytes(encode(model, channels, provenance, seed))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(buf: bytes) -> tuple[Model, dict[str, Any]]:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, head_len = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(r.take(head_len).decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError, ConfigError) as e:
        raise CheckpointError(f"bad checkpoint header: {e}") from e

    model = Model(config, seed=0)
    (n_tensors,) = r.unpack("<I")
    if n_tensors != len(model.params):
        raise CheckpointError(f"checkpoint has {n_tensors} tensors, config implies {len(model.params)}")
    table = []
    expected_offset = 0
    for _ in range(n_tensors):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        tag, rank = r.unpack("<BB")
        shape = r.unpack(f"<{rank}I") if rank else ()
        (offset,) = r.unpack("<Q")
        if tag != DTYPE_F32:
            raise CheckpointError(f"tensor {name}: unknown dtype tag {tag}")
        if name not in model.params:
            raise CheckpointError(f"unexpected tensor {name!r}")
        if tuple(shape) != model.params[name].shape:
            raise CheckpointError(f"tensor {name}: extents {shape} do not match config {model.params[name].shape}")
        if offset != expected_offset:
            raise CheckpointError(f"tensor {name}: offset {offset}, expected {expected_offset}")
        table.append((name, tuple(shape), offset))
        expected_offset += int(np.prod(shape, dtype=np.int64)) * 4
    if {t[0] for t in table} != set(model.params):
        raise CheckpointError("duplicate or missing tensor names")

    payload = r.buf[r.pos :]
    if len(payload) != expected_offset:
        raise CheckpointError(f"payload is {len(payload)} bytes, table needs {expected_offset}")
    state = {}
    for name, shape, offset in table:
        n = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(payload, dtype=_F32, count=n, offset=offset).reshape(shape)
    model.load_state_dict(state)
    return model, header


def load(path) -> tuple[Model, dict[str, Any]]:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return decode(buf)
