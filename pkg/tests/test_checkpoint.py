import json
import struct

import numpy as np
import pytest

from petsfm import checkpoint
from petsfm.errors import CheckpointError
from petsfm.model import Model, ModelConfig
from petsfm.rng import Rng

CFG = ModelConfig(n_channels=3, window_len=16, patch_len=4, d_model=8, n_layers=2, n_heads=2, n_classes=4)


def _model(seed=0, channel_attention=True):
    cfg = ModelConfig(**{**CFG.to_dict(), "channel_attention": channel_attention})
    return Model(cfg, seed=seed)


def test_round_trip_is_byte_identical_and_logits_match(tmp_path):
    model = _model(3)
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, model, ("a", "b", "c"), {"stage": "test"}, seed=3)
    loaded, header = checkpoint.load(path)
    checkpoint.save(tmp_path / "again.ckpt", loaded, ("a", "b", "c"), {"stage": "test"}, seed=3)
    assert path.read_bytes() == (tmp_path / "again.ckpt").read_bytes()
    x = Rng(0).normal((5, 3, 16))
    assert np.array_equal(model.logits(x).numpy(), loaded.logits(x).numpy())
    assert header["channels"] == ["a", "b", "c"]
    assert header["seed"] == 3 and header["provenance"] == {"stage": "test"}


def test_layout_starts_with_magic_version_and_sorted_header():
    buf = checkpoint.encode(_model(), ("x", "y", "z"))
    assert buf[:5] == b"PETS1"
    version, head_len = struct.unpack("<II", buf[5:13])
    assert version == 1
    header = json.loads(buf[13 : 13 + head_len])
    assert list(header) == sorted(header)
    assert header["config"] == CFG.to_dict()


@pytest.mark.parametrize("flag", [True, False])
def test_channel_attention_flag_in_header(flag):
    model = _model(channel_attention=flag)
    loaded, header = checkpoint.decode(checkpoint.encode(model))
    assert header["channel_attention"] is flag
    assert loaded.config.channel_attention is flag
    assert set(loaded.params) == set(model.params)


def test_same_seed_gives_identical_bytes():
    assert checkpoint.encode(_model(7)) == checkpoint.encode(_model(7))
    assert checkpoint.encode(_model(7)) != checkpoint.encode(_model(8))


@pytest.mark.parametrize("cut", [3, 10, 40, 200, -1])
def test_truncation_is_detected(cut):
    buf = checkpoint.encode(_model())
    with pytest.raises(CheckpointError):
        checkpoint.decode(buf[:cut])


def test_trailing_bytes_bad_magic_and_version():
    buf = checkpoint.encode(_model())
    with pytest.raises(CheckpointError):
        checkpoint.decode(buf + b"\0\0\0\0")
    with pytest.raises(CheckpointError):
        checkpoint.decode(b"XXXXX" + buf[5:])
    with pytest.raises(CheckpointError):
        checkpoint.decode(buf[:5] + struct.pack("<I", 2) + buf[9:])


def test_header_config_inconsistent_with_tensors():
    buf = checkpoint.encode(_model())
    _, head_len = struct.unpack("<II", buf[5:13])
    header = json.loads(buf[13 : 13 + head_len])
    header["config"]["d_model"] = 16
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    forged = buf[:5] + struct.pack("<II", 1, len(head)) + head + buf[13 + head_len :]
    with pytest.raises(CheckpointError):
        checkpoint.decode(forged)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "nope.ckpt")
