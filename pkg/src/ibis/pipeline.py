"""Per-antenna training, SVM fitting and evaluation over a model directory.

Directory layout::

    models/antenna_{a}.ibck     one checkpoint per antenna
    models/training_log.csv     per-epoch timing and loss for every antenna
    svm/antenna_{a}.ibsv        one multiclass SVM per antenna
    reports/{mode}/...          one report directory per evaluation mode
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ibis.data import SPLIT_CODES, Dataset, split_dataset
from ibis.errors import InputError, MissingArtifactError
from ibis.evaluation import (
    AntennaPrediction,
    MetricsReport,
    confusion_matrix,
    majority_vote,
    metrics_from_confusion,
    one_vs_rest_roc,
    report_export,
)
from ibis.model import (
    EpochRecord,
    ModelGraph,
    TrainConfig,
    TrainingLog,
    build_model,
    extract_features,
    load_model,
    predict,
    save_model,
    train,
)
from ibis.svm import SvmConfig, SvmModel, load_svm, save_svm, svm_class_scores, svm_predict, train_multiclass

log = logging.getLogger(__name__)

TIMING_FILE = "training_log.csv"


def checkpoint_path(model_dir, antenna: int) -> Path:
    return Path(model_dir) / f"antenna_{antenna}.ibck"


def svm_path(svm_dir, antenna: int) -> Path:
    return Path(svm_dir) / f"antenna_{antenna}.ibsv"


def antenna_ids(dataset: Dataset) -> list[int]:
    return sorted(int(a) for a in np.unique(dataset.antennas))


def ensure_split(dataset: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> None:
    """Split per event across all antennas if no assignment is stored yet."""
    if np.all(dataset.split < 0):
        split_dataset(dataset, ratios, seed)


# ---------------------------------------------------------------------------
# training


def train_antennas(dataset: Dataset, model_dir, arch: str = "ibis", config: TrainConfig | None = None) -> dict[int, TrainingLog]:
    """Train and save one model per antenna; antenna a uses seed ``config.seed + a``."""
    config = config or TrainConfig()
    config.validate()
    ensure_split(dataset, config.ratios, config.seed)
    out = Path(model_dir)
    out.mkdir(parents=True, exist_ok=True)
    logs = {}
    for a in antenna_ids(dataset):
        seed = config.seed + a
        model = build_model(arch, dataset.num_classes, seed)
        cfg = TrainConfig(config.epochs, config.batch_size, seed, config.learning_rate, config.ratios)
        log.info("training %s on antenna %d", arch, a)
        logs[a] = train(model, dataset.antenna(a), cfg)
        save_model(model, checkpoint_path(out, a))
    write_training_logs(logs, out / TIMING_FILE)
    return logs


def write_training_logs(logs: dict[int, TrainingLog], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["antenna", "epoch", "seconds", "train_loss", "train_accuracy", "val_accuracy"])
        for a in sorted(logs):
            for r in logs[a].records:
                w.writerow([a, r.epoch, f"{r.seconds:.3f}", f"{r.train_loss:.6f}",
                            f"{r.train_accuracy:.6f}", f"{r.val_accuracy:.6f}"])


def read_training_logs(path) -> dict[int, TrainingLog]:
    logs: dict[int, TrainingLog] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = EpochRecord(int(row["epoch"]), float(row["seconds"]), float(row["train_loss"]),
                              float(row["train_accuracy"]), float(row["val_accuracy"]))
            logs.setdefault(int(row["antenna"]), TrainingLog()).records.append(rec)
    return logs


def load_models(model_dir, antennas) -> dict[int, ModelGraph]:
    models = {}
    for a in antennas:
        p = checkpoint_path(model_dir, a)
        if not p.is_file():
            raise MissingArtifactError(f"checkpoint for antenna {a} not found at {p}")
        models[a] = load_model(p)
    return models


def load_svms(svm_dir, antennas) -> dict[int, SvmModel]:
    svms = {}
    for a in antennas:
        p = svm_path(svm_dir, a)
        if not p.is_file():
            raise MissingArtifactError(f"SVM model for antenna {a} not found at {p}")
        svms[a] = load_svm(p)
    return svms


# ---------------------------------------------------------------------------
# SVM refinement


def fit_svms(dataset: Dataset, model_dir, svm_dir, config: SvmConfig | None = None) -> dict[int, SvmModel]:
    """Fit one SVM per antenna on that antenna's training-split features."""
    config = config or SvmConfig()
    config.validate()
    if np.all(dataset.split < 0):
        raise InputError("dataset has no split assignment; train first or split it")
    antennas = antenna_ids(dataset)
    models = load_models(model_dir, antennas)
    out = Path(svm_dir)
    out.mkdir(parents=True, exist_ok=True)
    svms = {}
    for a in antennas:
        part = dataset.antenna(a).part("train")
        feats = extract_features(models[a], part.values)
        svms[a] = train_multiclass(feats, part.labels, config)
        save_svm(svms[a], svm_path(out, a))
    return svms


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class AntennaOutputs:
    """Per-antenna test-split outputs for one scoring method."""

    events: np.ndarray
    truth: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray
    scores: np.ndarray  # (n, K) per-class scores for ROC


def _report(truth, pred, num_classes, class_names, scores=None, timings=None) -> MetricsReport:
    report = metrics_from_confusion(confusion_matrix(truth, pred, num_classes))
    report.class_names = list(class_names)
    if scores is not None:
        report.roc, report.auc = one_vs_rest_roc(scores, truth, num_classes)
    if timings:
        report.epoch_seconds = timings
    return report


def _pre_fusion(outputs: dict[int, AntennaOutputs], dataset: Dataset, timings) -> MetricsReport:
    truth = np.concatenate([o.truth for o in outputs.values()])
    pred = np.concatenate([o.labels for o in outputs.values()])
    scores = np.concatenate([o.scores for o in outputs.values()])
    report = _report(truth, pred, dataset.num_classes, dataset.class_names, scores, timings)
    accs = {str(a): 100.0 * float(np.mean(o.labels == o.truth)) for a, o in outputs.items()}
    report.extra = {"antenna_accuracy": accs, "mean_antenna_accuracy": float(np.mean(list(accs.values()))),
                    "windows": int(len(truth))}
    return report


def _post_fusion(outputs: dict[int, AntennaOutputs], dataset: Dataset, timings) -> MetricsReport:
    preds = [AntennaPrediction(a, o.events, o.labels, o.confidence) for a, o in outputs.items()]
    events, fused = majority_vote(preds)
    first = next(iter(outputs.values()))
    truth = first.truth[np.argsort(first.events, kind="stable")]
    report = _report(truth, fused, dataset.num_classes, dataset.class_names, timings=timings)
    report.extra = {"windows": int(len(truth)), "antennas": sorted(outputs)}
    return report


def network_outputs(models: dict[int, ModelGraph], dataset: Dataset) -> dict[int, AntennaOutputs]:
    out = {}
    for a, model in models.items():
        part = dataset.antenna(a).part("test")
        labels, probs = predict(model, part.values)
        out[a] = AntennaOutputs(part.events, part.labels, labels, probs.max(axis=1), probs)
    return out


def svm_outputs(models: dict[int, ModelGraph], svms: dict[int, SvmModel], dataset: Dataset) -> dict[int, AntennaOutputs]:
    out = {}
    for a, model in models.items():
        part = dataset.antenna(a).part("test")
        feats = extract_features(model, part.values)
        labels, votes = svm_predict(svms[a], feats)
        k = len(svms[a].classes)
        conf = votes.max(axis=1) / max(k - 1, 1)
        scores = np.zeros((len(labels), dataset.num_classes))
        scores[:, svms[a].classes] = svm_class_scores(svms[a], feats)
        out[a] = AntennaOutputs(part.events, part.labels, labels, conf, scores)
    return out


def evaluate(dataset: Dataset, model_dir, svm_dir=None) -> dict[str, MetricsReport]:
    """Score the test split.

    With SVMs: ``network_pre``, ``svm_pre`` and ``svm_post``.  Without:
    ``network_pre`` and ``network_post``.
    """
    if np.all(dataset.split < 0):
        raise InputError("dataset has no split assignment")
    if not np.any(dataset.split == SPLIT_CODES["test"]):
        raise InputError("dataset has an empty test split")
    antennas = antenna_ids(dataset)
    models = load_models(model_dir, antennas)
    timing_file = Path(model_dir) / TIMING_FILE
    timings = None
    if timing_file.is_file():
        timings = {str(a): [r.seconds for r in lg.records] for a, lg in read_training_logs(timing_file).items()}
    net = network_outputs(models, dataset)
    reports = {"network_pre": _pre_fusion(net, dataset, timings)}
    if svm_dir is None:
        reports["network_post"] = _post_fusion(net, dataset, timings)
        return reports
    svm = svm_outputs(models, load_svms(svm_dir, antennas), dataset)
    reports["svm_pre"] = _pre_fusion(svm, dataset, timings)
    reports["svm_post"] = _post_fusion(svm, dataset, timings)
    return reports


def export_reports(reports: dict[str, MetricsReport], out_dir) -> dict[str, Path]:
    dirs = {}
    for mode, report in reports.items():
        dirs[mode] = Path(out_dir) / mode
        report_export(report, dirs[mode])
    return dirs


def per_class_spread(report: MetricsReport) -> float:
    """Max minus min per-class accuracy (percentage points), ignoring empty classes."""
    acc = np.asarray(report.per_class_accuracy, dtype=np.float64)
    acc = acc[np.isfinite(acc)]
    return float(acc.max() - acc.min()) if acc.size else 0.0
