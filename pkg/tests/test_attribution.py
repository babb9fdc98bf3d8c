import numpy as np
import pytest

from petsfm import tensor as T
from petsfm.attribution import AttributionMap, aggregate, importance_report, integrated_gradients
from petsfm.errors import DataError, DimensionError
from petsfm.finetune import FinetuneConfig, finetune
from petsfm.model import Model, ModelConfig
from petsfm.rng import Rng
from petsfm.tensor import Tensor


def linear_stub(W):
    """``[B, C, L] -> [B, K]`` via a fixed matrix ``W`` of shape ``[C*L, K]``."""

    def f(x: Tensor) -> Tensor:
        b = x.shape[0]
        return T.matmul(T.reshape(x, (b, -1)), Tensor(W))

    return f


def test_zero_input_gives_zero_attribution():
    model = Model(ModelConfig(n_channels=2, window_len=8, patch_len=4, d_model=8, n_layers=1, n_heads=2), seed=0)
    m = integrated_gradients(model, np.zeros((2, 8)), steps=8)
    assert np.all(m.phi == 0)
    assert m.phi.shape == (2, 8, 4)
    np.testing.assert_allclose(m.f_x, m.f_baseline)


@pytest.mark.parametrize("steps", [1, 5, 32])
def test_linear_stub_is_exact_for_any_step_count(steps):
    rng = Rng(1)
    with T.precision(np.float64):
        W = rng.normal((3 * 5, 2))
        x = rng.normal((3, 5))
        base = rng.normal((3, 5))
        m = integrated_gradients(linear_stub(W), x, baseline=base, steps=steps)
    expected = (x - base)[:, :, None] * W.reshape(3, 5, 2)
    np.testing.assert_allclose(m.phi, expected, rtol=1e-12, atol=1e-12)
    assert np.all(m.residual < 1e-9)
    assert m.baseline == "custom"


def _trained_model():
    cfg = ModelConfig(n_channels=3, window_len=16, patch_len=4, d_model=16, n_layers=1, n_heads=2, n_classes=2, dropout=0.0)
    rng = Rng(4)
    n = 120
    y = np.arange(n) % 2
    x = rng.normal((n, 3, 16))
    # only channel 1 carries the class: a rising or falling ramp
    ramp = np.linspace(-1.5, 1.5, 16)
    x[:, 1] += np.where(y[:, None] == 1, ramp, -ramp)
    model = Model(cfg, seed=0)
    finetune(model, x, y, FinetuneConfig(lr=1e-2, batch_size=16, max_epochs=20, patience=20, seed=0))
    return model, x


def test_completeness_error_shrinks_like_one_over_steps():
    model, x = _trained_model()
    xn = model.normalize_windows(x[:5])
    for xi in xn:
        coarse = integrated_gradients(model, xi, steps=64)
        fine = integrated_gradients(model, xi, steps=1024, chunk=256)
        gap = coarse.f_x - coarse.f_baseline
        err64 = np.abs(coarse.phi.sum(axis=(0, 1)) - gap)
        err1024 = np.abs(fine.phi.sum(axis=(0, 1)) - gap)
        assert np.all(err1024 <= err64 / 8 + 1e-6)
        assert fine.residual.max() <= 0.01


def test_chunking_does_not_change_the_sum():
    model, x = _trained_model()
    xi = model.normalize_windows(x[:1])[0]
    a = integrated_gradients(model, xi, steps=20, chunk=64)
    b = integrated_gradients(model, xi, steps=20, chunk=3)
    np.testing.assert_allclose(a.phi, b.phi, rtol=1e-5, atol=1e-9)


def test_informative_channel_ranks_first():
    model, x = _trained_model()
    imp, _ = importance_report(model, x, n_samples=20, steps=16, seed=1, channels=("noise_a", "signal", "noise_b"))
    assert imp.ranking()[0][0] == "signal"
    assert imp.n_samples == 20


def test_importance_report_is_deterministic_and_caps_sample_count(caplog):
    model, x = _trained_model()
    a, _ = importance_report(model, x, n_samples=5, steps=8, seed=3)
    b, _ = importance_report(model, x, n_samples=5, steps=8, seed=3)
    np.testing.assert_array_equal(a.phi, b.phi)
    with caplog.at_level("WARNING"):
        c, maps = importance_report(model, x[:4], n_samples=10, steps=4)
    assert len(maps) == 4 and c.n_samples == 4
    assert "only 4 windows" in caplog.text
    with pytest.raises(DataError):
        importance_report(model, x[:0])


def _map(phi):
    phi = np.asarray(phi, dtype=np.float64)
    k = phi.shape[-1]
    return AttributionMap(phi, 1, "zeros", np.zeros(k), np.zeros(k))


def test_aggregate_is_mean_absolute_value():
    a = _map(np.array([[[1.0, -1.0]], [[0.0, 2.0]]]))  # C=2, L=1, K=2
    b = _map(np.array([[[-3.0, 3.0]], [[0.0, 0.0]]]))
    g = aggregate([a, b], ("u", "v"))
    np.testing.assert_allclose(g.phi, [(1 + 3) / 2, (1 + 0) / 2])
    assert g.ranking() == [("u", 2.0), ("v", 0.5)]
    assert np.all(aggregate([a]).phi >= 0)
    # sign flips do not change importance
    np.testing.assert_array_equal(aggregate([_map(-a.phi)]).phi, aggregate([a]).phi)


def test_ranking_tie_keeps_channel_order_and_files(tmp_path):
    g = aggregate([_map(np.ones((3, 2, 2)))], ("c", "a", "b"))
    assert [n for n, _ in g.ranking()] == ["c", "a", "b"]
    g.write_csv(tmp_path / "i.csv")
    assert (tmp_path / "i.csv").read_text().splitlines()[:2] == ["channel,importance", "c,1.0"]
    g.write_svg(tmp_path / "i.svg")
    assert "<svg" in (tmp_path / "i.svg").read_text()


def test_shape_errors():
    W = np.ones((4, 2))
    with pytest.raises(DimensionError):
        integrated_gradients(linear_stub(W), np.ones((2, 2)), baseline=np.ones((2, 3)))
    with pytest.raises(DimensionError):
        integrated_gradients(linear_stub(W), np.ones(4))
    with pytest.raises(DataError):
        aggregate([])
    with pytest.raises(DimensionError):
        aggregate([_map(np.ones((1, 2, 2))), _map(np.ones((2, 2, 2)))])
