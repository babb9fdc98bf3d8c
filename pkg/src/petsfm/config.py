"""Run configuration: one JSON file covering data, model, training and outputs.

Every section is optional in the file; missing keys take the dataclass
defaults and unknown keys are rejected. ``TSFM_SEED`` in the environment
overrides ``seed``, which in turn seeds every stage.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .data import SynthConfig
from .errors import ConfigError
from .finetune import FinetuneConfig
from .model import ModelConfig
from .pretrain import PretrainConfig

SEED_ENV = "TSFM_SEED"


@dataclass
class AttrConfig:
    n_samples: int = 100
    steps: int = 32

    def __post_init__(self):
        if self.n_samples < 1 or self.steps < 1:
            raise ConfigError("attr.n_samples and attr.steps must be >= 1")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    attr: AttrConfig = field(default_factory=AttrConfig)
    labeled_frac: float = 0.018
    dtw_reps: int = 2
    seed: int = 0
    out_dir: str = "run"

    def __post_init__(self):
        if not 0.0 < self.labeled_frac <= 1.0:
            raise ConfigError("labeled_frac must lie in (0, 1]")
        if self.dtw_reps < 1:
            raise ConfigError("dtw_reps must be >= 1")
        m, s = self.model, self.synth
        if m.n_channels != len(s.channels):
            raise ConfigError(f"model.n_channels={m.n_channels} but synth.channels lists {len(s.channels)}")
        if m.window_len != s.window_len:
            raise ConfigError(f"model.window_len={m.window_len} but synth.window_len={s.window_len}")
        if s.label_mode == "degradation" and m.n_classes != s.n_levels:
            raise ConfigError(f"model.n_classes={m.n_classes} but synth.n_levels={s.n_levels}")

    def seeded(self) -> "RunConfig":
        """Copy with ``seed`` pushed into every stage."""
        return replace(
            self,
            synth=replace(self.synth, seed=self.seed),
            pretrain=replace(self.pretrain, seed=self.seed),
            finetune=replace(self.finetune, seed=self.seed),
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["synth"] = self.synth.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {unknown}")
        kw: dict[str, Any] = {k: v for k, v in d.items() if k not in _SECTIONS}
        for key, build in _SECTIONS.items():
            if key in d:
                try:
                    kw[key] = build(d[key])
                except TypeError as e:
                    raise ConfigError(f"bad '{key}' section: {e}") from e
                except ConfigError as e:
                    raise ConfigError(f"in '{key}': {e}") from e
        return cls(**kw)


def _strict(cls):
    def build(d):
        if not isinstance(d, dict):
            raise ConfigError(f"expected an object, got {type(d).__name__}")
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown key(s): {unknown}")
        return cls(**d)

    return build


_SECTIONS = {
    "model": ModelConfig.from_dict,
    "synth": SynthConfig.from_dict,
    "pretrain": _strict(PretrainConfig),
    "finetune": _strict(FinetuneConfig),
    "attr": _strict(AttrConfig),
}


def load_config(path=None, env=None) -> RunConfig:
    """Read a run config (defaults when ``path`` is None) and apply the seed override."""
    env = os.environ if env is None else env
    if path is None:
        cfg = RunConfig()
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        cfg = RunConfig.from_dict(raw)
    if env.get(SEED_ENV):
        try:
            cfg = replace(cfg, seed=int(env[SEED_ENV]))
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from e
    return cfg.seeded()


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
