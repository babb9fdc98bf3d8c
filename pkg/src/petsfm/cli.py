"""Command-line entry point: ``petsfm synth | dtw | pretrain | finetune | eval | attr``.

A scripted run::

    petsfm synth    --config run.json --out data
    petsfm dtw      --config run.json --manifest data/manifest.json
    petsfm pretrain --config run.json --manifest data/manifest.json --out pre.ckpt
    petsfm finetune --config run.json --manifest data/manifest.json --checkpoint pre.ckpt --out ft.ckpt
    petsfm eval     --config run.json --manifest data/manifest.json --checkpoint ft.ckpt --out eval
    petsfm attr     --config run.json --manifest data/manifest.json --checkpoint ft.ckpt --out attr
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .attribution import importance_report
from .config import RunConfig, load_config
from .data import (
    SynthConfig,
    WindowDataset,
    build_manifest,
    load_dataset,
    read_manifest,
    select_ood_profile,
    similarity_matrix,
    split_indices,
    synthesize,
    write_manifest,
    write_recordings,
)
from .errors import ConfigError, DataError, PetsfmError
from .finetune import finetune, predict
from .metrics import metrics
from .model import Model
from .pretrain import pretrain, write_loss_csv
from .rng import Rng

log = logging.getLogger("petsfm")


def _out_path(arg: str | None, cfg: RunConfig, default: str) -> Path:
    path = Path(arg) if arg else Path(cfg.out_dir) / default
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _profiles_from_manifest(manifest: dict) -> SynthConfig:
    return SynthConfig.from_dict(manifest["synth"])


def _load_split(manifest_path, cfg: RunConfig) -> tuple[dict, WindowDataset, dict[str, np.ndarray]]:
    manifest = read_manifest(manifest_path)
    tags = manifest.get("split") or {}
    if not tags.get("ood_profile"):
        raise DataError(f"{manifest_path} has no OOD profile yet; run 'petsfm dtw' first")
    ds = load_dataset(manifest_path)
    frac = tags.get("labeled_frac") or cfg.labeled_frac
    return manifest, ds, split_indices(ds, tags["ood_profile"], frac, tags.get("seed", cfg.seed))


def _splits(manifest_path, cfg: RunConfig) -> tuple[dict, dict[str, WindowDataset]]:
    manifest, ds, idx = _load_split(manifest_path, cfg)
    parts = {role: ds.subset(i, hide_labels=role == "pretrain") for role, i in idx.items()}
    return manifest, parts


def _check_compat(cfg: RunConfig, header: dict, manifest: dict) -> None:
    saved = header["config"]
    for key in ("n_channels", "window_len", "patch_len", "d_model"):
        if saved[key] != getattr(cfg.model, key):
            raise ConfigError(f"checkpoint has {key}={saved[key]} but config says {getattr(cfg.model, key)}")
    if header.get("channels") and list(header["channels"]) != list(manifest["channels"]):
        raise DataError(f"checkpoint channels {header['channels']} differ from dataset channels {manifest['channels']}")


def cmd_synth(args, cfg: RunConfig) -> int:
    out = Path(args.out) if args.out else Path(cfg.out_dir) / "data"
    records, series = synthesize(cfg.synth)
    manifest = build_manifest(cfg.synth, records)
    path = write_recordings(out, manifest, series)
    L, stride = cfg.synth.window_len, cfg.synth.stride
    per_profile: Counter = Counter()
    for rec in records:
        per_profile[rec["profile"]] += (rec["n_samples"] - L) // stride + 1
    total = sum(per_profile.values())
    print(f"wrote {len(records)} recordings to {out}")
    for name in manifest["profiles"]:
        print(f"  {name}: {per_profile[name]} windows")
    print(f"windows: {total} (roles assigned by 'petsfm dtw')")
    print(f"manifest: {path}")
    return 0


def cmd_dtw(args, cfg: RunConfig) -> int:
    manifest = read_manifest(args.manifest)
    synth = _profiles_from_manifest(manifest)
    if len(synth.profiles) < 2:
        raise DataError("DTW selection needs at least two profiles")
    sim = similarity_matrix(synth.profiles, reps=cfg.dtw_reps, seed=synth.seed, plant=synth.plant)
    ood = select_ood_profile(sim)
    folder = Path(args.manifest).parent
    sim.write_csv(folder / "similarity.csv")
    (folder / "similarity.svg").write_text(sim.to_svg())
    manifest["split"] = {"ood_profile": ood, "labeled_frac": cfg.labeled_frac, "seed": cfg.seed}
    write_manifest(args.manifest, manifest)

    ds = load_dataset(args.manifest)
    parts = split_indices(ds, ood, cfg.labeled_frac, cfg.seed)
    for role in ("pretrain", "finetune", "test"):
        print(f"{role}: {parts[role].size} windows")
    print(f"OOD profile: {ood}")
    return 0


def cmd_pretrain(args, cfg: RunConfig) -> int:
    manifest, parts = _splits(args.manifest, cfg)
    mc = replace(cfg.model, channel_attention=not args.no_channel_attention)
    model = Model(mc, seed=cfg.seed)
    result = pretrain(model, parts["pretrain"], cfg.pretrain)
    out = _out_path(args.out, cfg, "pretrained.ckpt")
    final = result.epoch_losses[-1] if result.epoch_losses else None
    prov = {"stage": "pretrain", "epochs": cfg.pretrain.epochs, "windows": len(parts["pretrain"]), "final_loss": final}
    checkpoint.save(out, model, manifest["channels"], prov, cfg.seed)
    write_loss_csv(result.history, out.with_suffix(".loss.csv"))
    print(f"pretrained on {len(parts['pretrain'])} windows, final epoch loss {final}")
    print(f"checkpoint: {out}")
    return 0


def cmd_finetune(args, cfg: RunConfig) -> int:
    manifest, parts = _splits(args.manifest, cfg)
    mc = replace(cfg.model, channel_attention=not args.no_channel_attention)
    if args.no_pretrain:
        model = Model(mc, seed=cfg.seed)
        source = "random"
    else:
        if not args.checkpoint:
            raise ConfigError("finetune needs --checkpoint unless --no-pretrain is given")
        loaded, header = checkpoint.load(args.checkpoint)
        _check_compat(cfg, header, manifest)
        model = Model(replace(loaded.config, channel_attention=mc.channel_attention), seed=cfg.seed)
        # a dual-attention checkpoint can seed the ablation: the shared weights carry over
        model.load_state_dict(loaded.state_dict(), strict=False)
        source = str(args.checkpoint)
    ft = parts["finetune"]
    result = finetune(model, ft.windows, ft.labels, replace(cfg.finetune, init="random" if args.no_pretrain else "pretrained"))
    out = _out_path(args.out, cfg, "finetuned.ckpt")
    prov = {
        "stage": "finetune",
        "init": source,
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val_acc,
        "labeled_windows": len(ft),
    }
    checkpoint.save(out, model, manifest["channels"], prov, cfg.seed)
    print(f"fine-tuned on {len(ft)} labeled windows, best validation accuracy {result.best_val_acc:.4f} (epoch {result.best_epoch})")
    print(f"checkpoint: {out}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    manifest, ds, idx = _load_split(args.manifest, cfg)
    model, header = checkpoint.load(args.checkpoint)
    _check_compat(cfg, header, manifest)
    # in-distribution evaluation uses the windows whose labels were hidden during training
    data = ds.subset(idx["test"] if args.split == "ood" else idx["pretrain"])
    if args.max_windows and len(data) > args.max_windows:
        pick = np.sort(Rng(cfg.seed).permutation(len(data))[: args.max_windows])
        data = data.subset(pick)
    preds, probs = predict(model, data.windows)
    report = metrics(preds, data.labels, model.config.n_classes, probs)
    out = Path(args.out) if args.out else Path(cfg.out_dir) / f"eval_{args.split}"
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "report.json")
    report.write_csv(out / "confusion.csv", out / "mpp.csv")
    report.write_svg(out / "confusion.svg", out / "mpp.svg")
    print(f"{args.split} windows: {report.n}")
    print(f"accuracy: {report.accuracy:.4f}  macro-F1: {report.macro_f1:.4f}")
    print(f"report: {out / 'report.json'}")
    return 0


def cmd_attr(args, cfg: RunConfig) -> int:
    manifest, parts = _splits(args.manifest, cfg)
    model, header = checkpoint.load(args.checkpoint)
    _check_compat(cfg, header, manifest)
    data = parts["test"] if args.split == "ood" else parts["finetune"]
    imp, maps = importance_report(model, data.windows, cfg.attr.n_samples, cfg.attr.steps, cfg.seed, manifest["channels"])
    out = Path(args.out) if args.out else Path(cfg.out_dir) / "attr"
    out.mkdir(parents=True, exist_ok=True)
    imp.write_csv(out / "importance.csv")
    imp.write_svg(out / "importance.svg")
    worst = max(float(m.residual.max()) for m in maps)
    print(f"attributed {imp.n_samples} windows, {cfg.attr.steps} steps, worst completeness residual {worst:.2e}")
    for rank, (name, value) in enumerate(imp.ranking(), 1):
        print(f"{rank}. {name} {value:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="petsfm", description="Patch transformer pretraining and OOD evaluation on synthetic converter data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="run config JSON (defaults when omitted)")
        sp.set_defaults(func=func)
        return sp

    sp = add("synth", cmd_synth, "generate recordings and the manifest")
    sp.add_argument("--out", help="dataset directory (default <out_dir>/data)")

    sp = add("dtw", cmd_dtw, "profile similarity, OOD selection and split tags")
    sp.add_argument("--manifest", required=True)

    sp = add("pretrain", cmd_pretrain, "masked-reconstruction pretraining")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", help="checkpoint path")
    sp.add_argument("--no-channel-attention", action="store_true")

    sp = add("finetune", cmd_finetune, "supervised fine-tuning on the labeled split")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--checkpoint", help="pretrained checkpoint")
    sp.add_argument("--out", help="checkpoint path")
    sp.add_argument("--no-pretrain", action="store_true", help="start from random weights")
    sp.add_argument("--no-channel-attention", action="store_true", help="temporal attention only")

    sp = add("eval", cmd_eval, "accuracy, F1, confusion and confidence histograms")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", choices=("ood", "id"), default="ood")
    sp.add_argument("--max-windows", type=int, default=0, help="evaluate a random subset of this size")
    sp.add_argument("--out", help="report directory")

    sp = add("attr", cmd_attr, "integrated-gradient channel importance")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", choices=("ood", "finetune"), default="ood")
    sp.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except PetsfmError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
