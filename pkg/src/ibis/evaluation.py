"""Antenna fusion and the evaluation metrics suite."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ibis.errors import DegenerateProblemError, InputError

REPORT_SCHEMA_VERSION = 1


@dataclass
class AntennaPrediction:
    antenna: int
    windows: np.ndarray  # aligned window (event) ids
    labels: np.ndarray
    confidence: np.ndarray  # in [0, 1]

    def __post_init__(self):
        self.windows = np.asarray(self.windows)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if not (len(self.windows) == len(self.labels) == len(self.confidence)):
            raise InputError("window ids, labels and confidences must have equal length")
        if np.any((self.confidence < 0) | (self.confidence > 1)):
            raise InputError("confidence scores must lie in [0, 1]")


def majority_vote(predictions: list[AntennaPrediction]) -> tuple[np.ndarray, np.ndarray]:
    """Fuse per-antenna labels by plurality.

    Ties go to the label with the highest mean confidence among the antennas
    that voted for it, then to the lowest class index.  Returns the window
    ids (sorted) and the fused label of each.
    """
    if len(predictions) < 2:
        raise InputError("majority voting needs at least two antennas")
    order = [np.argsort(p.windows, kind="stable") for p in predictions]
    ids = predictions[0].windows[order[0]]
    for p, o in zip(predictions[1:], order[1:]):
        if not np.array_equal(p.windows[o], ids):
            raise InputError(f"antenna {p.antenna} covers a different window set")
    labels = np.stack([p.labels[o] for p, o in zip(predictions, order)], axis=1)
    conf = np.stack([p.confidence[o] for p, o in zip(predictions, order)], axis=1)
    k = int(labels.max()) + 1 if labels.size else 1
    onehot = labels[:, :, None] == np.arange(k)
    counts = onehot.sum(axis=1)
    conf_sum = (onehot * conf[:, :, None]).sum(axis=1)
    mean_conf = np.divide(conf_sum, counts, out=np.zeros_like(conf_sum), where=counts > 0)
    top = counts == counts.max(axis=1, keepdims=True)
    score = np.where(top, mean_conf, -np.inf)
    return ids, score.argmax(axis=1)


# ---------------------------------------------------------------------------
# confusion matrix and summary metrics


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def per_class_accuracy(self) -> np.ndarray:
        """Diagonal share of each row, in percent (NaN for empty rows)."""
        rows = self.counts.sum(axis=1).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return 100.0 * np.diag(self.counts) / rows


def confusion_matrix(true_labels, predicted_labels, num_classes: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise InputError("true and predicted label sequences differ in length")
    for arr in (t, p):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise InputError(f"labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class_accuracy: list[float]
    per_class_precision: list[float]
    per_class_recall: list[float]
    per_class_f1: list[float]
    confusion: list[list[int]]
    zero_prediction_classes: list[int] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)
    roc: dict[str, list[list[float]]] = field(default_factory=dict)
    auc: dict[str, float] = field(default_factory=dict)
    epoch_seconds: dict[str, list[float]] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def metrics_from_confusion(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy and macro (unweighted) precision/recall/F1, all in percent.

    A class that is never predicted gets precision 0 and is listed in
    ``zero_prediction_classes``.
    """
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise InputError("confusion matrix is empty")
    diag = np.diag(c)
    col, row = c.sum(axis=0), c.sum(axis=1)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(diag), where=denom > 0)
    per_acc = np.where(row > 0, recall, np.nan)
    return MetricsReport(
        accuracy=100.0 * diag.sum() / total,
        macro_precision=100.0 * precision.mean(),
        macro_recall=100.0 * recall.mean(),
        macro_f1=100.0 * f1.mean(),
        per_class_accuracy=(100.0 * per_acc).tolist(),
        per_class_precision=(100.0 * precision).tolist(),
        per_class_recall=(100.0 * recall).tolist(),
        per_class_f1=(100.0 * f1).tolist(),
        confusion=cm.counts.tolist(),
        zero_prediction_classes=np.flatnonzero(col == 0).tolist(),
    )


# ---------------------------------------------------------------------------
# ROC / AUC


def roc_curve(scores, truth) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) points, sweeping the distinct scores downward.

    The curve is anchored at (0, 0, +inf) and (1, 1, -inf), so it has
    ``n_distinct_scores + 2`` points.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truth).astype(bool)
    if s.shape != y.shape:
        raise InputError("scores and truth differ in length")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateProblemError("ROC needs both positive and negative samples")
    thresholds = np.unique(s)[::-1]
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    # last index of each distinct score in descending order
    ends = np.searchsorted(-s_sorted, -thresholds, side="right") - 1
    tp = np.cumsum(y_sorted)[ends]
    fp = np.cumsum(~y_sorted)[ends]
    points = [(0.0, 0.0, math.inf)]
    points += [(f / n_neg, t / n_pos, float(th)) for f, t, th in zip(fp.tolist(), tp.tolist(), thresholds.tolist())]
    points.append((1.0, 1.0, -math.inf))
    return points


def auc(curve) -> float:
    """Trapezoidal area under an ROC point list."""
    pts = np.asarray([(p[0], p[1]) for p in curve], dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


def one_vs_rest_roc(scores: np.ndarray, truth: np.ndarray, num_classes: int) -> tuple[dict, dict]:
    """Per-class ROC curves and AUCs; classes absent from ``truth`` are skipped."""
    curves, areas = {}, {}
    truth = np.asarray(truth)
    for k in range(num_classes):
        pos = truth == k
        if pos.all() or not pos.any():
            continue
        curve = roc_curve(scores[:, k], pos)
        curves[str(k)] = [list(p) for p in curve]
        areas[str(k)] = auc(curve)
    return curves, areas


# ---------------------------------------------------------------------------
# export


def report_export(report: MetricsReport, path) -> dict[str, Path]:
    """Write ``report.json`` plus flat CSVs into the directory ``path``.

    Returns the written file paths keyed by role.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = {"report": out / "report.json", "confusion": out / "confusion.csv"}
        doc = {"schema_version": REPORT_SCHEMA_VERSION, **asdict(report)}
        written["report"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with open(written["confusion"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            names = report.class_names or [str(k) for k in range(len(report.confusion))]
            w.writerow(["true\\predicted"] + names)
            for name, row in zip(names, report.confusion):
                w.writerow([name] + row)
        for k, curve in report.roc.items():
            p = written[f"roc_{k}"] = out / f"roc_class_{k}.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["fpr", "tpr", "threshold"])
                for fpr, tpr, th in curve:
                    w.writerow([repr(fpr), repr(tpr), repr(th)])
        if report.epoch_seconds:
            p = written["timing"] = out / "epoch_timing.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["antenna", "epoch", "seconds"])
                for ant, secs in sorted(report.epoch_seconds.items()):
                    for e, s in enumerate(secs, start=1):
                        w.writerow([ant, e, f"{s:.3f}"])
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written


def load_report(path) -> MetricsReport:
    doc = json.loads((Path(path) / "report.json").read_text(encoding="utf-8"))
    version = doc.pop("schema_version", None)
    if version != REPORT_SCHEMA_VERSION:
        raise InputError(f"unsupported report schema version {version}")
    return MetricsReport(**doc)
