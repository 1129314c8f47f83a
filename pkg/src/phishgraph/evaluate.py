"""Stratified splitting, confusion counts, metrics, and report emission.

Splitting happens at the address level, stratified by address label, so all
of an address's transactions follow it into its partition. Metrics follow
the usual definitions with phishing as the positive class; every 0/0 case
collapses to 0, which is what lets a degenerate all-benign prediction report
a phishing recall of exactly zero. Values are kept at full precision and
rounded to two decimals only in the human-readable table.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch

_CLASSES = ("benign", "phishing")


@dataclass
class SplitMasks:
    train_mask: np.ndarray
    test_mask: np.ndarray
    seed: int
    ratio: float


def stratified_split(
    labels: np.ndarray, ratio: float = 0.8, seed: int = 0
) -> SplitMasks:
    """Shuffle within each class and cut at floor(ratio * class size).

    The remainder goes to test, so per-class proportions deviate from the
    ratio by at most one element.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 < ratio < 1.0:
        raise ShapeMismatch(f"split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train = np.zeros(len(labels), dtype=bool)
    test = np.zeros(len(labels), dtype=bool)
    for code in (0, 1):
        members = np.nonzero(labels == code)[0]
        if members.size == 0:
            continue
        shuffled = members[rng.permutation(members.size)]
        # floor() with a tiny nudge so exact products are not lost to float error
        cut = int(math.floor(ratio * members.size + 1e-9))
        train[shuffled[:cut]] = True
        test[shuffled[cut:]] = True
    return SplitMasks(train_mask=train, test_mask=test, seed=seed, ratio=ratio)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with phishing as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(
    pred: np.ndarray, truth: np.ndarray, mask: np.ndarray | None = None
) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ShapeMismatch("prediction and truth vectors differ in length")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape:
            raise ShapeMismatch("mask length differs from vectors")
    p, t = pred[mask], truth[mask]
    return ConfusionMatrix(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
        tn=int(np.sum((p == 0) & (t == 0))),
    )


@dataclass
class MetricsReport:
    accuracy: float
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    support: dict[str, int]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {
                cls: {
                    "precision": self.precision[cls],
                    "recall": self.recall[cls],
                    "f1": self.f1[cls],
                    "support": self.support[cls],
                }
                for cls in _CLASSES
            },
            "weighted": {
                "precision": self.weighted_precision,
                "recall": self.weighted_recall,
                "f1": self.weighted_f1,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MetricsReport":
        per = payload["per_class"]
        return cls(
            accuracy=payload["accuracy"],
            precision={c: per[c]["precision"] for c in _CLASSES},
            recall={c: per[c]["recall"] for c in _CLASSES},
            f1={c: per[c]["f1"] for c in _CLASSES},
            support={c: per[c]["support"] for c in _CLASSES},
            weighted_precision=payload["weighted"]["precision"],
            weighted_recall=payload["weighted"]["recall"],
            weighted_f1=payload["weighted"]["f1"],
        )


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy plus per-class and support-weighted precision/recall/F1."""
    precision = {
        "phishing": _safe_div(cm.tp, cm.tp + cm.fp),
        "benign": _safe_div(cm.tn, cm.tn + cm.fn),
    }
    recall = {
        "phishing": _safe_div(cm.tp, cm.tp + cm.fn),
        "benign": _safe_div(cm.tn, cm.tn + cm.fp),
    }
    f1 = {
        cls: _safe_div(
            2 * precision[cls] * recall[cls], precision[cls] + recall[cls]
        )
        for cls in _CLASSES
    }
    support = {"phishing": cm.tp + cm.fn, "benign": cm.tn + cm.fp}
    total = cm.total

    def weighted(metric: dict[str, float]) -> float:
        return _safe_div(
            sum(metric[c] * support[c] for c in _CLASSES), sum(support.values())
        )

    return MetricsReport(
        accuracy=_safe_div(cm.tp + cm.tn, total),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        weighted_precision=weighted(precision),
        weighted_recall=weighted(recall),
        weighted_f1=weighted(f1),
    )


def format_metrics_table(report: MetricsReport) -> str:
    """Aligned text table: rows Precision/Recall/F1, columns per class."""
    header = f"{'Metric':<12}{'Benign':>10}{'Phishing':>10}{'Weighted Avg':>14}"
    lines = [header, "-" * len(header)]
    rows = (
        ("Precision", "precision", "weighted_precision"),
        ("Recall", "recall", "weighted_recall"),
        ("F1-Score", "f1", "weighted_f1"),
    )
    for title, attr, wattr in rows:
        per = getattr(report, attr)
        lines.append(
            f"{title:<12}{per['benign']:>10.2f}{per['phishing']:>10.2f}"
            f"{getattr(report, wattr):>14.2f}"
        )
    lines.append(
        f"{'Accuracy':<12}{report.accuracy:>10.2f}    "
        f"(support: benign {report.support['benign']}, "
        f"phishing {report.support['phishing']})"
    )
    return "\n".join(lines) + "\n"


def emit_report(
    out_dir: str | Path,
    metrics_report: MetricsReport | None = None,
    train_report=None,
    stats=None,
    importance: list[tuple[str, float]] | None = None,
) -> tuple[Path, Path]:
    """Write metrics.json (machine) and report.txt (human) into out_dir.

    Sections are omitted when their component is absent. Volatile values such
    as wall time are deliberately excluded so reruns are byte-identical.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    document: dict = {}
    if metrics_report is not None:
        document["metrics"] = metrics_report.to_dict()
    if train_report is not None:
        document["training"] = train_report.to_dict()
    if stats is not None:
        document["class_stats"] = {
            "features": list(stats.feature_names),
            "support": dict(stats.support),
            "classes": {
                cls: {
                    "mean": [float(v) for v in stats.mean[cls]],
                    "max": [float(v) for v in stats.max[cls]],
                    "std": [float(v) for v in stats.std[cls]],
                }
                for cls in _CLASSES
                if stats.present(cls)
            },
        }
    if importance is not None:
        document["importance"] = [
            {"feature": name, "score": score, "rank": i + 1}
            for i, (name, score) in enumerate(importance)
        ]

    json_path = out_dir / "metrics.json"
    text_path = out_dir / "report.txt"
    json_path.write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    sections = []
    if metrics_report is not None:
        sections.append(format_metrics_table(metrics_report))
    if importance is not None:
        lines = ["Feature importance (descending):"]
        for i, (name, score) in enumerate(importance, start=1):
            lines.append(f"{i:>3}. {name:<20} {score:.4f}")
        sections.append("\n".join(lines) + "\n")
    if stats is not None:
        lines = ["Per-class feature statistics (mean):"]
        for i, name in enumerate(stats.feature_names):
            cells = [f"{name:<20}"]
            for cls in _CLASSES:
                if stats.present(cls):
                    cells.append(f"{cls} {stats.mean[cls][i]:.4g}")
                else:
                    cells.append(f"{cls} absent")
            lines.append("  ".join(cells))
        sections.append("\n".join(lines) + "\n")
    text_path.write_text("\n".join(sections), encoding="utf-8")
    return json_path, text_path
