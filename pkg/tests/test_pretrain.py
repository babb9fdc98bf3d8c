import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from petsfm import tensor as T
from petsfm.data import SynthConfig, default_profiles, synthesize
from petsfm.errors import ConfigError
from petsfm.model import Model, ModelConfig
from petsfm.optim import Adam, clip_gradients, global_grad_norm, lr_schedule
from petsfm.pretrain import PretrainConfig, apply_mask, masked_loss, n_masked, pretrain, sample_mask, write_loss_csv
from petsfm.rng import Rng
from petsfm.tensor import Tensor


def test_sample_mask_examples():
    rng = Rng(0)
    assert not sample_mask(2, 3, 32, 0.0, rng).any()
    assert sample_mask(2, 3, 32, 1.0, rng).all()
    plan = sample_mask(4, 9, 32, 0.3, Rng(7))
    assert np.all(plan.sum(axis=-1) == 10)
    np.testing.assert_array_equal(plan, sample_mask(4, 9, 32, 0.3, Rng(7)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 40), st.floats(0.0, 1.0), st.integers(0, 2**32))
def test_mask_count_is_rounded_ratio(b, c, n, ratio, seed):
    plan = sample_mask(b, c, n, ratio, Rng(seed))
    k = math.floor(ratio * n + 0.5)
    assert np.all(plan.sum(axis=-1) == k)
    assert abs(plan.mean() - ratio) <= 1 / n / 2 + 1e-12 or k in (0, n)


def test_n_masked_rounds_half_up():
    assert n_masked(0.3, 32) == 10
    assert n_masked(0.5, 5) == 3
    assert n_masked(0.25, 2) == 1


def test_mask_ratio_out_of_range():
    with pytest.raises(ConfigError):
        sample_mask(1, 1, 4, 1.5, Rng(0))


def test_apply_mask_examples():
    x = Rng(1).normal((2, 3, 4, 5)) + 3.0
    empty = np.zeros((2, 3, 4), dtype=bool)
    np.testing.assert_array_equal(apply_mask(x, empty), x)
    np.testing.assert_array_equal(apply_mask(x, ~empty), 0.0)
    one = empty.copy()
    one[1, 2, 3] = True
    out = apply_mask(x, one)
    assert np.sum(out == 0) == 5
    np.testing.assert_array_equal(out[1, 2, 3], 0.0)
    out_t = apply_mask(Tensor(x), one).numpy()
    np.testing.assert_array_equal(out_t, out.astype(np.float32))


def test_masked_loss_examples():
    rng = Rng(2)
    target = rng.normal((1, 2, 3, 4))
    plan = np.zeros((1, 2, 3), dtype=bool)
    plan[0, 1, 2] = True
    assert masked_loss(Tensor(target), target, plan).item() == 0.0
    with T.precision(np.float64):
        recon = target.copy()
        recon[0, 1, 2] += 1.0
        assert masked_loss(Tensor(recon), target, plan).item() == pytest.approx(4.0, abs=1e-12)
        base = masked_loss(Tensor(recon), target, plan).item()
        recon[0, 0, 0] += 123.0  # an unmasked patch
        assert masked_loss(Tensor(recon), target, plan).item() == base
    with pytest.raises(ConfigError):
        masked_loss(Tensor(target), target, np.zeros((1, 2, 3), dtype=bool))


def test_masked_loss_gradient_is_exactly_zero_on_unmasked_patches():
    rng = Rng(3)
    with T.precision(np.float64):
        recon = Tensor(rng.normal((2, 3, 5, 4)), requires_grad=True)
        target = rng.normal((2, 3, 5, 4))
        plan = sample_mask(2, 3, 5, 0.4, rng)
        masked_loss(recon, target, plan).backward()
    assert np.all(recon.grad[~plan] == 0.0)
    assert np.all(np.abs(recon.grad[plan]).sum(axis=-1) > 0)


def test_lr_schedule_endpoints_and_joint():
    total = 1000
    assert lr_schedule(0, total, 1e-6, 2e-4, 1e-7) == 1e-6
    assert lr_schedule(100, total, 1e-6, 2e-4, 1e-7) == pytest.approx(2e-4, abs=1e-15)
    assert abs(lr_schedule(total - 1, total, 1e-6, 2e-4, 1e-7) - 1e-7) <= 1e-9
    # both sides of the warm-up/decay joint approach the peak
    before = lr_schedule(99, total, 1e-6, 2e-4, 1e-7)
    after = lr_schedule(101, total, 1e-6, 2e-4, 1e-7)
    assert abs(before - 2e-4) < 3e-6 and abs(after - 2e-4) < 3e-6
    with pytest.raises(ValueError):
        lr_schedule(total, total, 1e-6, 2e-4, 1e-7)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5000), st.data())
def test_lr_schedule_stays_within_bounds(total, data):
    step = data.draw(st.integers(0, total - 1))
    lr = lr_schedule(step, total, 1e-6, 2e-4, 1e-7)
    assert 1e-7 - 1e-15 <= lr <= 2e-4 + 1e-15


def _params_with_grads(grads):
    ps = []
    for g in grads:
        p = Tensor(np.zeros_like(g), requires_grad=True, dtype=np.float64)
        p.grad = np.array(g, dtype=np.float64)
        ps.append(p)
    return ps


def test_clip_gradients_examples():
    ps = _params_with_grads([[0.3, 0.4]])  # norm 0.5
    clip_gradients(ps, 1.0)
    np.testing.assert_array_equal(ps[0].grad, [0.3, 0.4])

    ps = _params_with_grads([[1.2, 1.6]])  # norm 2
    before = clip_gradients(ps, 1.0)
    assert before == pytest.approx(2.0)
    np.testing.assert_allclose(ps[0].grad, [0.6, 0.8])
    assert abs(global_grad_norm(ps) - 1.0) <= 1e-6

    ps = _params_with_grads([[0.0, 0.0], [0.0]])
    clip_gradients(ps, 1.0)
    assert all(np.all(p.grad == 0) for p in ps)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(1e-3, 10.0))
def test_clipped_norm_never_exceeds_limit(values, clip):
    ps = _params_with_grads([values])
    clip_gradients(ps, clip)
    assert global_grad_norm(ps) <= clip + 1e-6


def test_adam_first_step_moves_by_lr_against_gradient_sign():
    p = Tensor(np.array([1.0, -1.0, 0.5]), requires_grad=True, dtype=np.float64)
    p.grad = np.array([0.2, -3.0, 0.0])
    Adam({"p": p}).step(0.01)
    np.testing.assert_allclose(p.data, [0.99, -0.99, 0.5], atol=1e-9)


def _tiny_setup(seed):
    cfg = SynthConfig(
        profiles=default_profiles(duration=2.0),
        channels=("i_a", "i_b", "t_ntc"),
        window_len=32,
        recordings_per_cell=1,
        seed=seed,
    )
    _, series = synthesize(cfg)
    windows = np.concatenate([np.stack(np.split(s[:, : s.shape[1] // 32 * 32], s.shape[1] // 32, axis=1)) for s in series])
    model = Model(ModelConfig(n_channels=3, window_len=32, patch_len=4, d_model=16, n_layers=1, n_heads=2), seed=seed)
    return model, windows[:800]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pretraining_reduces_loss_over_200_steps(seed):
    model, windows = _tiny_setup(seed)
    cfg = PretrainConfig(epochs=4, batch_size=16, lr_peak=2e-3, seed=seed)
    res = pretrain(model, windows, cfg)
    assert len(res.history) == 200
    assert res.epoch_losses[-1] < res.epoch_losses[0]


def test_pretraining_is_deterministic_and_zero_epochs_is_noop(tmp_path):
    model_a, windows = _tiny_setup(0)
    model_b, _ = _tiny_setup(0)
    cfg = PretrainConfig(epochs=1, batch_size=64, lr_peak=1e-3, seed=5)
    a = pretrain(model_a, windows, cfg)
    b = pretrain(model_b, windows, cfg)
    assert a.history == b.history
    write_loss_csv(a.history, tmp_path / "a.csv")
    write_loss_csv(b.history, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "epoch,step,lr,loss"

    model_c, _ = _tiny_setup(0)
    before = model_c.state_dict()
    res = pretrain(model_c, windows, PretrainConfig(epochs=0))
    assert res.history == []
    for k, v in model_c.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_pretrain_config_validation():
    with pytest.raises(ConfigError):
        PretrainConfig(mask_ratio=0.0)
    with pytest.raises(ConfigError):
        PretrainConfig(lr_start=1e-3, lr_peak=1e-4)
    d = PretrainConfig()
    assert (d.epochs, d.mask_ratio, d.lr_start, d.lr_peak, d.lr_end, d.batch_size) == (10, 0.30, 1e-6, 2e-4, 1e-7, 128)
