"""Classification metrics: accuracy, macro-F1, normalised confusion, MPP histograms."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from . import plots

MPP_BINS = 20


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    per_class_f1: list[float]
    support: list[int]
    confusion: list[list[float]]
    mpp_edges: list[float] = field(default_factory=list)
    mpp_correct: list[int] = field(default_factory=list)
    mpp_incorrect: list[int] = field(default_factory=list)
    n: int = 0
    seed_accuracies: list[float] = field(default_factory=list)
    accuracy_variance: float | None = None

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    def write_csv(self, confusion_path, mpp_path) -> None:
        k = len(self.confusion)
        with open(confusion_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true"] + [f"pred_{j}" for j in range(k)])
            for i, row in enumerate(self.confusion):
                w.writerow([i] + [repr(float(v)) for v in row])
        with open(mpp_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_low", "bin_high", "correct", "incorrect"])
            e = self.mpp_edges
            for i in range(len(self.mpp_correct)):
                w.writerow([e[i], e[i + 1], self.mpp_correct[i], self.mpp_incorrect[i]])

    def write_svg(self, confusion_path, mpp_path) -> None:
        labels = [str(i) for i in range(len(self.confusion))]
        Path(confusion_path).write_text(
            plots.heatmap(np.array(self.confusion), labels, labels, "Normalised confusion (rows: true)")
        )
        centers = [f"{(self.mpp_edges[i] + self.mpp_edges[i + 1]) / 2:.3f}" for i in range(len(self.mpp_correct))]
        Path(mpp_path).write_text(
            plots.grouped_bars(
                centers,
                {"correct": self.mpp_correct, "incorrect": self.mpp_incorrect},
                "Maximum predicted probability",
            )
        )


def mpp_histogram(mpp: np.ndarray, bins: int = MPP_BINS) -> np.ndarray:
    """Counts over right-closed bins ``[0, 1/bins], (1/bins, 2/bins], ...``."""
    idx = np.clip(np.ceil(np.asarray(mpp) * bins).astype(int) - 1, 0, bins - 1)
    return np.bincount(idx, minlength=bins)


def metrics(preds, labels, n_classes: int, probs=None) -> EvalReport:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.size == 0 or preds.shape != labels.shape:
        raise DataError("metrics needs equal-length, non-empty predictions and labels")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    support = cm.sum(axis=1)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = support - tp
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    has = support > 0
    conf = np.where(has[:, None], cm / np.maximum(support, 1)[:, None], 0.0)

    report = EvalReport(
        accuracy=float(np.mean(preds == labels)),
        macro_f1=float(f1[has].mean()),
        per_class_f1=[float(v) for v in f1],
        support=[int(v) for v in support],
        confusion=conf.tolist(),
        n=int(preds.size),
    )
    if probs is not None:
        probs = np.asarray(probs)
        mpp = probs.max(axis=-1)
        ok = preds == labels
        report.mpp_edges = [i / MPP_BINS for i in range(MPP_BINS + 1)]
        report.mpp_correct = mpp_histogram(mpp[ok]).tolist()
        report.mpp_incorrect = mpp_histogram(mpp[~ok]).tolist()
    return report


def with_seed_spread(report: EvalReport, seed_accuracies) -> EvalReport:
    report.seed_accuracies = [float(a) for a in seed_accuracies]
    report.accuracy_variance = float(np.var(report.seed_accuracies)) if report.seed_accuracies else None
    return report
