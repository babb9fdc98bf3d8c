"""Synthetic converter recordings, windowing, DTW profile similarity and dataset splits.

Recordings are generated from a mission profile (a load trajectory) and a
degradation level. Degradation raises the device on-state voltage, which
shifts the line-to-line voltages, and the thermal resistance, which scales
both the gain and the time constant of the temperature response to the
current. Everything else (modulation, dc link) is level-independent.

On-disk layout: one CSV per recording (header ``t,<channels>``) plus a JSON
manifest. Windows are cut on load.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError
from .rng import Rng

CHANNELS = ("v_m", "v_dc", "i_a", "i_b", "i_c", "v_ab", "v_bc", "t_h", "t_ntc")
UNITS = ("pu", "V", "A", "A", "A", "V", "V", "degC", "degC")
CROSS_CHANNELS = ("x0", "x1", "x2", "x3", "x4", "x5")

MANIFEST_FORMAT = "petsfm-dataset"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class MissionProfile:
    """Load trajectory recipe: mean load, fluctuation bands ``(f_lo, f_hi, amp)`` and random load steps."""

    name: str
    mean_load: float
    bands: tuple[tuple[float, float, float], ...] = ()
    transient_rate: float = 0.0  # load steps per second
    transient_amp: float = 0.0
    duration: float = 30.0  # seconds
    sample_rate: float = 1000.0

    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


def default_profiles(duration: float = 30.0, sample_rate: float = 1000.0) -> list[MissionProfile]:
    """Four drive-cycle stand-ins; the highway cycle runs at twice the urban mean load."""
    kw = dict(duration=duration, sample_rate=sample_rate)
    return [
        MissionProfile("NYCC", 0.40, ((2.0, 6.0, 0.08),), transient_rate=3.0, transient_amp=0.05, **kw),
        MissionProfile("LA92", 0.40, ((1.0, 4.0, 0.10),), transient_rate=2.0, transient_amp=0.06, **kw),
        MissionProfile("UDDS", 0.40, ((1.5, 5.0, 0.09),), transient_rate=2.5, transient_amp=0.05, **kw),
        MissionProfile("HWFET", 0.80, ((0.5, 2.0, 0.10),), transient_rate=0.5, transient_amp=0.05, **kw),
    ]


@dataclass(frozen=True)
class DegradationLevel:
    level: int
    v_on: float
    r_th: float


def degradation_levels(n_levels: int = 4, v_on_range=(2.97, 3.12), r_th_ratio: float = 2.0) -> list[DegradationLevel]:
    """``v_on`` rises linearly across the levels, ``r_th`` geometrically (``r_th_ratio ** k``)."""
    lo, hi = v_on_range
    out = []
    for k in range(n_levels):
        frac = k / (n_levels - 1) if n_levels > 1 else 0.0
        out.append(DegradationLevel(k, lo + (hi - lo) * frac, float(r_th_ratio) ** k))
    return out


@dataclass
class PlantConstants:
    """Electrical and thermal constants of the synthetic converter (desk-scale, time-compressed)."""

    i_max: float = 20.0  # A at unit load
    f_elec: float = 12.0  # Hz, mean electrical frequency
    f_wander: float = 0.15  # relative slow frequency wander
    torque_ripple: float = 0.3  # relative fast amplitude modulation
    ripple_tau: tuple[float, float] = (0.002, 0.020)  # s, correlation-time range, drawn per recording
    v_dc_nom: float = 48.0
    dc_sag: float = 2.0  # V at unit load
    m_base: float = 0.15
    m_gain: float = 0.75
    tau_h: float = 0.200  # s, heatsink
    tau_j: float = 0.0023  # s, per junction-to-NTC stage at r_th = 1
    junction_stages: int = 2
    gain_h: float = 6.0  # K per unit loss
    gain_j: float = 10.0
    ambient: float = 25.0
    drift_std: float = 0.1  # K, ambient wander
    drift_tau: float = 0.5  # s
    noise_i: float = 0.02  # fraction of amplitude
    noise_v: float = 0.05  # V
    noise_t: float = 0.01  # K
    noise_m: float = 0.002


@dataclass
class SynthConfig:
    profiles: list[MissionProfile] = field(default_factory=default_profiles)
    n_levels: int = 4
    v_on_range: tuple[float, float] = (2.97, 3.12)
    r_th_ratio: float = 2.0
    recordings_per_cell: int = 1
    channels: tuple[str, ...] = CHANNELS
    window_len: int = 512
    stride: int = 0  # 0 -> window_len
    label_mode: str = "degradation"  # or "cross_channel"
    seed: int = 0
    plant: PlantConstants = field(default_factory=PlantConstants)

    def __post_init__(self):
        if self.stride == 0:
            self.stride = self.window_len
        if self.label_mode not in ("degradation", "cross_channel"):
            raise ConfigError(f"label_mode must be 'degradation' or 'cross_channel', got {self.label_mode!r}")
        names = CHANNELS if self.label_mode == "degradation" else CROSS_CHANNELS
        bad = [c for c in self.channels if c not in names]
        if bad:
            raise ConfigError(f"unknown channel(s) {bad}; available: {list(names)}")
        if len({p.name for p in self.profiles}) != len(self.profiles):
            raise ConfigError("profile names must be unique")
        for p in self.profiles:
            if p.n_samples() < self.window_len:
                raise ConfigError(f"profile {p.name}: duration*rate shorter than window_len")

    @property
    def levels(self) -> list[DegradationLevel]:
        return degradation_levels(self.n_levels, self.v_on_range, self.r_th_ratio)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["profiles"] = [asdict(p) for p in self.profiles]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SynthConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth config key(s): {sorted(unknown)}")
        if "profiles" in d:
            profs = []
            for p in d["profiles"]:
                p = dict(p)
                p["bands"] = tuple(tuple(b) for b in p.get("bands", ()))
                profs.append(MissionProfile(**p))
            d["profiles"] = profs
        if "plant" in d:
            plant = dict(d["plant"])
            if "ripple_tau" in plant:
                plant["ripple_tau"] = tuple(plant["ripple_tau"])
            d["plant"] = PlantConstants(**plant)
        for key in ("v_on_range", "channels"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _seed(*parts: int) -> int:
    """Mix integers into one 64-bit seed (order-sensitive)."""
    from .rng import splitmix64

    state = 0x243F6A8885A308D3
    for p in parts:
        state, out = splitmix64(state ^ (int(p) & ((1 << 64) - 1)))
        state ^= out
    return state


def load_trajectory(profile: MissionProfile, rng: Rng) -> np.ndarray:
    """Per-unit load ``s(t) >= 0`` sampled at the profile rate."""
    n = profile.n_samples()
    t = np.arange(n) / profile.sample_rate
    s = np.full(n, float(profile.mean_load))
    for f_lo, f_hi, amp in profile.bands:
        for _ in range(3):
            f = rng.uniform(f_lo, f_hi)
            ph = rng.uniform(0.0, 2 * np.pi)
            s += amp / math.sqrt(3.0) * np.sin(2 * np.pi * f * t + ph)
    if profile.transient_rate > 0 and profile.transient_amp > 0:
        n_ev = max(1, int(round(profile.transient_rate * profile.duration)))
        at = np.sort(rng.integers(n, n_ev))
        jumps = rng.normal(n_ev, scale=profile.transient_amp)
        steps = np.zeros(n)
        np.add.at(steps, at, jumps)
        level = np.cumsum(steps)
        level -= level.mean()
        a = math.exp(-1.0 / (profile.sample_rate * 0.01))
        s += lfilter([1 - a], [1, -a], level, zi=[a * level[0]])[0]
    return np.clip(s, 0.0, None)


def _first_order(u: np.ndarray, tau: float, rate: float, x0: float) -> np.ndarray:
    a = math.exp(-1.0 / (rate * tau))
    return lfilter([1 - a], [1, -a], u, zi=[a * x0])[0]


def generate_profile(
    profile: MissionProfile,
    level: DegradationLevel,
    seed: int,
    plant: PlantConstants | None = None,
    initial_rise: float | None = None,
) -> dict[str, np.ndarray]:
    """All nine raw channels for one recording, keyed by channel name.

    ``initial_rise`` sets the starting temperature rise above ambient
    (default: the steady state for the mean loss).
    """
    c = plant or PlantConstants()
    rng = Rng(seed)
    rate = profile.sample_rate
    s = load_trajectory(profile, rng.split())
    n = s.size
    noise = rng.split()

    t = np.arange(n) / rate
    wander = np.sin(2 * np.pi * rng.uniform(0.05, 0.2) * t + rng.uniform(0.0, 2 * np.pi))
    theta = 2 * np.pi * np.cumsum(c.f_elec * (1.0 + c.f_wander * wander)) / rate + rng.uniform(0.0, 2 * np.pi)
    lo, hi = c.ripple_tau
    tau_r = lo * (hi / lo) ** rng.random(1)[0]
    fast = _first_order(noise.normal(n), tau_r, rate, 0.0)
    fast /= float(fast.std()) + 1e-12
    amp = c.i_max * s * np.clip(1.0 + c.torque_ripple * fast, 0.0, None)
    phases = (theta, theta - 2 * np.pi / 3, theta + 2 * np.pi / 3)
    i_abc = [amp * np.sin(ph) * (1.0 + c.noise_i * noise.normal(n)) for ph in phases]

    m = np.clip(c.m_base + c.m_gain * s, 0.0, 1.0)
    v_m = m * np.sin(theta) + c.noise_m * noise.normal(n)
    v_dc = c.v_dc_nom - c.dc_sag * s**2 + 0.1 * np.sin(6 * theta) + c.noise_v * noise.normal(n)
    v_ph = [0.5 * v_dc * m * np.sin(ph) - level.v_on * np.sign(i) for ph, i in zip(phases, i_abc)]
    v_ab = v_ph[0] - v_ph[1] + c.noise_v * noise.normal(n)
    v_bc = v_ph[1] - v_ph[2] + c.noise_v * noise.normal(n)

    # the heatsink sees all three phases; the NTC sits on the phase-a die
    loss_total = level.v_on / 3.0 * sum(i * i for i in i_abc) / (1.5 * c.i_max**2)
    loss_a = level.v_on / 3.0 * i_abc[0] ** 2 / (0.5 * c.i_max**2)
    if initial_rise is None:
        rise_h = c.gain_h * level.r_th * float(loss_total.mean())
        rise_j = c.gain_j * level.r_th * float(loss_a.mean())
    else:
        rise_h, rise_j = float(initial_rise), 0.0
    x_h = _first_order(c.gain_h * level.r_th * loss_total, c.tau_h, rate, rise_h)
    x_j = c.gain_j * level.r_th * loss_a
    for _ in range(c.junction_stages):
        x_j = _first_order(x_j, c.tau_j * level.r_th, rate, rise_j)
    walk = noise.normal(n)
    drift = _first_order(walk, c.drift_tau, rate, 0.0)
    drift *= c.drift_std / (float(drift.std()) + 1e-12)
    t_h = c.ambient + drift + x_h + c.noise_t * noise.normal(n)
    t_ntc = t_h + x_j + c.noise_t * noise.normal(n)

    return {
        "v_m": v_m,
        "v_dc": v_dc,
        "i_a": i_abc[0],
        "i_b": i_abc[1],
        "i_c": i_abc[2],
        "v_ab": v_ab,
        "v_bc": v_bc,
        "t_h": t_h,
        "t_ntc": t_ntc,
    }


def cross_channel_classes(n_classes: int = 4) -> list[tuple[int, int]]:
    """Class ``k`` -> signs ``(s01, s23)`` coupling channel pairs (0, 1) and (2, 3)."""
    if n_classes != 4:
        raise ConfigError("the cross-channel construction defines exactly 4 classes")
    return [(1, 1), (1, -1), (-1, 1), (-1, -1)]


def generate_cross_channel(
    profile: MissionProfile, label: int, seed: int, noise_std: float = 0.3, corr_len: float = 8.0
) -> dict[str, np.ndarray]:
    """Six channels whose class is fixed only by the sign of two inter-channel correlations.

    Channels 0/1 share one load-driven latent and channels 2/3 another, each
    pair coupled with sign ``+1`` or ``-1``; channels 4/5 are independent
    latents of the same kind. Each latent is the centred load trajectory plus
    an AR(1) band with correlation length ``corr_len`` samples. Every single
    channel has the same marginal law under all four classes.
    """
    s01, s23 = cross_channel_classes()[label]
    rng = Rng(seed)
    a = math.exp(-1.0 / corr_len)
    latents = []
    for _ in range(4):
        s = load_trajectory(profile, rng.split())
        s = s - s.mean()
        # fast band keeps the coupling visible inside every short window
        fast = lfilter([1.0], [1, -a], rng.split().normal(s.size))
        latents.append(s + float(s.std() + 1e-3) * fast / float(fast.std() + 1e-12))
    n = latents[0].size
    noise = rng.split()
    out = {
        "x0": latents[0],
        "x1": s01 * latents[0],
        "x2": latents[1],
        "x3": s23 * latents[1],
        "x4": latents[2],
        "x5": latents[3],
    }
    return {k: v + noise_std * float(v.std() + 1e-3) * noise.normal(n) for k, v in out.items()}


def current_norm(rec: dict[str, np.ndarray]) -> np.ndarray:
    """Euclidean norm of the three phase currents."""
    return np.sqrt(rec["i_a"] ** 2 + rec["i_b"] ** 2 + rec["i_c"] ** 2)


# -- windows ---------------------------------------------------------------

def window(series: np.ndarray, window_len: int, stride: int | None = None) -> np.ndarray:
    """Sliding windows over the last axis of ``[C, T]``: ``floor((T - L) / stride) + 1`` of them."""
    series = np.asarray(series)
    stride = stride or window_len
    total = series.shape[-1]
    if total < window_len:
        raise DataError(f"series of length {total} is shorter than window length {window_len}")
    count = (total - window_len) // stride + 1
    starts = np.arange(count) * stride
    return np.stack([series[..., s : s + window_len] for s in starts])


@dataclass
class WindowDataset:
    windows: np.ndarray  # [n, C, L] float32
    labels: np.ndarray | None  # [n] int, -1 where hidden
    profile_ids: np.ndarray  # [n] int index into manifest["profiles"]
    manifest: dict = field(default_factory=dict)
    recording_ids: np.ndarray | None = None

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def profile_names(self) -> list[str]:
        return list(self.manifest.get("profiles", []))

    def labeled_fraction(self) -> float:
        if self.labels is None or len(self) == 0:
            return 0.0
        return float(np.mean(self.labels >= 0))

    def subset(self, idx, hide_labels: bool = False) -> "WindowDataset":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None
        if self.labels is not None:
            labels = np.full(idx.size, -1, dtype=np.int64) if hide_labels else self.labels[idx]
        rec = self.recording_ids[idx] if self.recording_ids is not None else None
        return WindowDataset(self.windows[idx], labels, self.profile_ids[idx], self.manifest, rec)


def synthesize(cfg: SynthConfig) -> tuple[list[dict], list[np.ndarray]]:
    """Generate every recording. Returns ``(records, series)`` with ``series[i]`` of shape ``[C, T]``."""
    records, series = [], []
    levels = cfg.levels
    n_cls = cfg.n_levels
    for pi, prof in enumerate(cfg.profiles):
        for k in range(n_cls):
            for r in range(cfg.recordings_per_cell):
                seed = _seed(cfg.seed, pi, k, r)
                if cfg.label_mode == "degradation":
                    rec = generate_profile(prof, levels[k], seed, cfg.plant)
                else:
                    rec = generate_cross_channel(prof, k, seed)
                arr = np.stack([rec[ch] for ch in cfg.channels]).astype(np.float32)
                records.append(
                    {
                        "file": f"rec_{len(records):04d}.csv",
                        "profile": prof.name,
                        "level": k,
                        "repeat": r,
                        "seed": seed,
                        "n_samples": int(arr.shape[1]),
                    }
                )
                series.append(arr)
    return records, series


def build_manifest(cfg: SynthConfig, records: list[dict]) -> dict:
    rates = {p.sample_rate for p in cfg.profiles}
    units = dict(zip(CHANNELS, UNITS))
    return {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "label_mode": cfg.label_mode,
        "channels": list(cfg.channels),
        "units": [units.get(ch, "1") for ch in cfg.channels],
        "sample_rate": rates.pop() if len(rates) == 1 else None,
        "window_len": cfg.window_len,
        "stride": cfg.stride,
        "seed": cfg.seed,
        "profiles": [p.name for p in cfg.profiles],
        "levels": [asdict(lv) for lv in cfg.levels],
        "recordings": records,
        "split": {"ood_profile": None, "labeled_frac": None},
        "synth": cfg.to_dict(),
    }


def dataset_from_series(manifest: dict, series: Sequence[np.ndarray]) -> WindowDataset:
    L, stride = manifest["window_len"], manifest["stride"]
    names = manifest["profiles"]
    chunks, labels, pids, rids = [], [], [], []
    for ri, (rec, arr) in enumerate(zip(manifest["recordings"], series)):
        w = window(arr, L, stride)
        chunks.append(w)
        labels.append(np.full(len(w), rec["level"], dtype=np.int64))
        pids.append(np.full(len(w), names.index(rec["profile"]), dtype=np.int64))
        rids.append(np.full(len(w), ri, dtype=np.int64))
    return WindowDataset(
        np.concatenate(chunks).astype(np.float32),
        np.concatenate(labels),
        np.concatenate(pids),
        manifest,
        np.concatenate(rids),
    )


def write_recordings(out_dir, manifest: dict, series: Sequence[np.ndarray]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rate = manifest["sample_rate"] or 1.0
    for rec, arr in zip(manifest["recordings"], series):
        with open(out / rec["file"], "w", newline="") as fh:
            fh.write(",".join(["t", *manifest["channels"]]) + "\n")
            for i in range(arr.shape[1]):
                fh.write(f"{i / rate:.6f}," + ",".join(f"{v:.9g}" for v in arr[:, i]) + "\n")
    return write_manifest(out / "manifest.json", manifest)


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        m = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if m.get("format") != MANIFEST_FORMAT:
        raise DataError(f"{path} is not a {MANIFEST_FORMAT} manifest")
    return m


def read_recordings(manifest_path) -> tuple[dict, list[np.ndarray]]:
    manifest_path = Path(manifest_path)
    m = read_manifest(manifest_path)
    series = []
    for rec in m["recordings"]:
        f = manifest_path.parent / rec["file"]
        try:
            with open(f, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                if header != ["t", *m["channels"]]:
                    raise DataError(f"{f}: header {header} does not match manifest channels")
                rows = np.array([[float(v) for v in row[1:]] for row in reader], dtype=np.float32)
        except OSError as exc:
            raise DataError(f"cannot read recording {f}: {exc}") from exc
        series.append(rows.T.copy())
    return m, series


def load_dataset(manifest_path) -> WindowDataset:
    m, series = read_recordings(manifest_path)
    return dataset_from_series(m, series)


# -- dynamic time warping ----------------------------------------------------

def dtw_distance(a, b, band: int | None = None) -> float:
    """Classic DTW with ``|a_i - b_j|`` local cost; ``band`` enables a Sakoe-Chiba window.

    Evaluated one anti-diagonal at a time so each step is a vector operation.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise DataError("dtw_distance needs non-empty series")
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for k in range(2, n + m + 1):
        i = np.arange(max(1, k - m), min(n, k - 1) + 1)
        j = k - i
        if band is not None:
            keep = np.abs(i * m / n - j) <= band
            i, j = i[keep], j[keep]
            if i.size == 0:
                continue
        best = np.minimum(np.minimum(D[i - 1, j], D[i, j - 1]), D[i - 1, j - 1])
        D[i, j] = np.abs(a[i - 1] - b[j - 1]) + best
    return float(D[n, m])


@dataclass
class SimilarityMatrix:
    values: np.ndarray
    names: list[str]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["profile", *self.names])
            for name, row in zip(self.names, self.values):
                w.writerow([name, *(repr(float(v)) for v in row)])

    def to_svg(self) -> str:
        from . import plots

        return plots.heatmap(self.values, self.names, self.names, "DTW distance between mission profiles")


def downsample(x: np.ndarray, max_points: int = 2000) -> np.ndarray:
    """Block-average down to at most ``max_points`` samples."""
    x = np.asarray(x, dtype=np.float64)
    if x.size <= max_points:
        return x
    step = -(-x.size // max_points)
    n = x.size // step * step
    return x[:n].reshape(-1, step).mean(axis=1)


def similarity_matrix(
    profiles: Sequence[MissionProfile],
    reps: int = 2,
    seed: int = 0,
    plant: PlantConstants | None = None,
    max_points: int = 2000,
    band: int | None = None,
) -> SimilarityMatrix:
    """Mean DTW distance between current-norm realisations of each pair of profiles.

    Realisation ``r`` of every profile uses the same seed, so identical
    profile definitions compare at distance zero.
    """
    if len(profiles) < 2:
        raise DataError("need at least two profiles")
    level0 = degradation_levels(1)[0]
    sigs = [
        [downsample(current_norm(generate_profile(p, level0, _seed(seed, r), plant)), max_points) for r in range(reps)]
        for p in profiles
    ]
    k = len(profiles)
    M = np.zeros((k, k))
    for p in range(k):
        for q in range(p + 1, k):
            M[p, q] = np.mean([dtw_distance(sigs[p][r], sigs[q][r], band) for r in range(reps)])
    M = 0.5 * (M + M.T)
    np.fill_diagonal(M, 0.0)
    return SimilarityMatrix(M, [p.name for p in profiles])


def select_ood_profile(matrix: SimilarityMatrix) -> str:
    """Profile with the largest total distance to all others; ties go to the smallest name."""
    sums = np.asarray(matrix.values).sum(axis=1)
    top = sums.max()
    return min(n for n, s in zip(matrix.names, sums) if s == top)


# -- splits ------------------------------------------------------------------

def split_indices(dataset: WindowDataset, ood_profile: str, labeled_frac: float = 0.018, seed: int = 0) -> dict[str, np.ndarray]:
    """Window indices for ``pretrain``, ``finetune`` and ``test`` (the held-out profile).

    Per level, ``round(labeled_frac * n_level)`` of the in-distribution
    windows are labeled.
    """
    names = dataset.profile_names
    if ood_profile not in names:
        raise DataError(f"OOD profile {ood_profile!r} not among {names}")
    if dataset.labels is None:
        raise DataError("split needs level labels on every window")
    ood_id = names.index(ood_profile)
    ood = np.flatnonzero(dataset.profile_ids == ood_id)
    ind = np.flatnonzero(dataset.profile_ids != ood_id)
    rng = Rng(_seed(seed, 0x5E17))
    labeled = []
    for k in np.unique(dataset.labels[ind]):
        idx = ind[dataset.labels[ind] == k]
        take = int(math.floor(labeled_frac * idx.size + 0.5))
        if take < 1:
            raise DataError(f"labeled_frac {labeled_frac} yields no labeled window for level {k}")
        labeled.append(idx[rng.permutation(idx.size)[:take]])
    labeled = np.sort(np.concatenate(labeled))
    return {"pretrain": np.setdiff1d(ind, labeled), "finetune": labeled, "test": ood}


def split(dataset: WindowDataset, ood_profile: str, labeled_frac: float = 0.018, seed: int = 0) -> dict[str, WindowDataset]:
    """Partition into ``pretrain`` (labels hidden), ``finetune`` and ``test``; see :func:`split_indices`."""
    idx = split_indices(dataset, ood_profile, labeled_frac, seed)
    return {
        "pretrain": dataset.subset(idx["pretrain"], hide_labels=True),
        "finetune": dataset.subset(idx["finetune"]),
        "test": dataset.subset(idx["test"]),
    }
