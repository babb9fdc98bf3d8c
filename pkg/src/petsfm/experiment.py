"""End-to-end out-of-distribution protocol on synthetic data.

One run: synthesise recordings, pick the held-out profile by DTW, split,
pretrain, fine-tune (and the ablation arms), evaluate on the held-out
profile. Everything stays in memory.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    default_profiles,
    SynthConfig,
    WindowDataset,
    build_manifest,
    dataset_from_series,
    select_ood_profile,
    similarity_matrix,
    split,
    synthesize,
)
from .finetune import FinetuneConfig, finetune, predict
from .metrics import EvalReport, metrics
from .model import Model, ModelConfig
from .pretrain import PretrainConfig, pretrain

log = logging.getLogger(__name__)


@dataclass
class ProtocolConfig:
    model: ModelConfig
    synth: SynthConfig
    pretrain: PretrainConfig
    finetune: FinetuneConfig
    labeled_frac: float = 0.018
    dtw_reps: int = 2
    max_test_windows: int | None = None


@dataclass
class ArmResult:
    name: str
    seed: int
    report: EvalReport
    seconds: float
    model: Model | None = None


@dataclass
class ProtocolData:
    ood_profile: str
    similarity: np.ndarray
    splits: dict[str, WindowDataset]


def prepare_data(cfg: ProtocolConfig, seed: int) -> ProtocolData:
    synth = replace(cfg.synth, seed=seed)
    records, series = synthesize(synth)
    manifest = build_manifest(synth, records)
    ds = dataset_from_series(manifest, series)
    sim = similarity_matrix(synth.profiles, reps=cfg.dtw_reps, seed=seed, plant=synth.plant)
    ood = select_ood_profile(sim)
    parts = split(ds, ood, cfg.labeled_frac, seed)
    test = parts["test"]
    if cfg.max_test_windows is not None and len(test) > cfg.max_test_windows:
        from .rng import Rng

        idx = np.sort(Rng(seed ^ 0x7E57).permutation(len(test))[: cfg.max_test_windows])
        parts["test"] = test.subset(idx)
    return ProtocolData(ood, sim.values, parts)


def pretrained_model(cfg: ProtocolConfig, data: ProtocolData, seed: int, model_cfg: ModelConfig | None = None) -> Model:
    mc = model_cfg or cfg.model
    model = Model(mc, seed=seed)
    pretrain(model, data.splits["pretrain"], replace(cfg.pretrain, seed=seed))
    return model


def finetune_and_eval(
    name: str,
    model: Model,
    cfg: ProtocolConfig,
    data: ProtocolData,
    seed: int,
    keep_model: bool = False,
) -> ArmResult:
    t0 = time.time()
    ft = data.splits["finetune"]
    finetune(model, ft.windows, ft.labels, replace(cfg.finetune, seed=seed))
    test = data.splits["test"]
    preds, probs = predict(model, test.windows)
    report = metrics(preds, test.labels, model.config.n_classes, probs)
    log.info("%s seed %d: OOD accuracy %.3f", name, seed, report.accuracy)
    return ArmResult(name, seed, report, time.time() - t0, model if keep_model else None)


ARMS = ("pretrained", "random", "no_channel_attention", "pretrained_no_channel_attention")


def build_arm(arm: str, cfg: ProtocolConfig, data: ProtocolData, seed: int) -> Model:
    """Initial model for one arm: dual or temporal-only attention, pretrained or random."""
    if arm not in ARMS:
        raise ValueError(f"unknown arm {arm!r}; choose from {ARMS}")
    mc = cfg.model if "no_channel_attention" not in arm else replace(cfg.model, channel_attention=False)
    if arm.startswith("pretrained"):
        return pretrained_model(cfg, data, seed, mc)
    return Model(mc, seed=seed)


def run_arms(cfg: ProtocolConfig, seed: int, arms=("pretrained", "random", "no_channel_attention")) -> tuple[ProtocolData, dict[str, ArmResult]]:
    """Run the requested arms for one seed on a freshly synthesised dataset."""
    data = prepare_data(cfg, seed)
    out: dict[str, ArmResult] = {}
    for arm in arms:
        t0 = time.time()
        model = build_arm(arm, cfg, data, seed)
        res = finetune_and_eval(arm, model, cfg, data, seed, keep_model=True)
        res.seconds = time.time() - t0
        out[arm] = res
    return data, out


@dataclass
class ProtocolResult:
    channels: tuple[str, ...]
    runs: dict[str, list[ArmResult]] = field(default_factory=dict)
    ood_profiles: list[str] = field(default_factory=list)
    first_model: Model | None = None
    first_test_windows: np.ndarray | None = None

    def accuracies(self, arm: str) -> list[float]:
        return [r.report.accuracy for r in self.runs[arm]]

    def mean(self, arm: str) -> float:
        return float(np.mean(self.accuracies(arm)))

    def summary_lines(self) -> list[str]:
        lines = []
        for arm, runs in self.runs.items():
            accs = " ".join(f"{a:.3f}" for a in self.accuracies(arm))
            secs = sum(r.seconds for r in runs)
            lines.append(f"{arm:<32} mean {self.mean(arm):.3f}  seeds [{accs}]  {secs:.0f} s")
        return lines


def run_protocol(cfg: ProtocolConfig, seeds=(0, 1, 2), arms=("pretrained", "random"), keep_first_model: bool = False) -> ProtocolResult:
    """Run every arm for every seed; optionally keep the first arm's seed-0 model for attribution."""
    result = ProtocolResult(tuple(cfg.synth.channels), {arm: [] for arm in arms})
    for i, seed in enumerate(seeds):
        data, out = run_arms(cfg, seed, arms)
        result.ood_profiles.append(data.ood_profile)
        for arm in arms:
            res = out[arm]
            if keep_first_model and i == 0 and arm == arms[0]:
                result.first_model = res.model
                result.first_test_windows = data.splits["test"].windows
            res.model = None
            result.runs[arm].append(res)
    return result


def acceptance_protocol() -> tuple[ProtocolConfig, ProtocolConfig]:
    """Desk-scale settings for the degradation run and the cross-channel ablation run.

    Tiny encoder (6 channels, 128 samples, patch 8, width 64, 2 layers, 4
    heads); four 54 s profiles with four recordings per profile and level
    give about 20k in-distribution windows, 1.8% of them labeled.
    """
    model = ModelConfig(n_channels=6, window_len=128, patch_len=8, d_model=64, n_layers=2, n_heads=4, dropout=0.1)
    profiles = default_profiles(duration=54.0)
    deg = ProtocolConfig(
        model=model,
        synth=SynthConfig(
            profiles=profiles,
            recordings_per_cell=4,
            channels=("v_m", "i_a", "i_b", "v_ab", "t_h", "t_ntc"),
            window_len=128,
        ),
        pretrain=PretrainConfig(epochs=4, lr_peak=1e-3, batch_size=64),
        finetune=FinetuneConfig(lr=1e-3, batch_size=32, max_epochs=60, patience=20),
        max_test_windows=2000,
    )
    cross = ProtocolConfig(
        model=model,
        synth=SynthConfig(
            profiles=default_profiles(duration=54.0),
            recordings_per_cell=1,
            channels=("x0", "x1", "x2", "x3", "x4", "x5"),
            window_len=128,
            label_mode="cross_channel",
        ),
        pretrain=PretrainConfig(epochs=0),
        finetune=FinetuneConfig(lr=1e-3, batch_size=32, max_epochs=20, patience=5),
        labeled_frac=0.05,
        max_test_windows=1000,
    )
    return deg, cross
