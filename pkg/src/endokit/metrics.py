"""Evaluation of prediction score files against manifest ground truth.

Implements the full metric suite from first principles: confusion matrix,
balanced accuracy, macro/weighted F1, tie-aware one-vs-rest ROC-AUC with
micro and macro averages, average precision / macro mAP, and the combined
ranking metric (mean of macro AUC and balanced accuracy).

AUC and AP are computed by a descending-score sweep with tie groups
collapsed, which makes the trapezoidal AUC exactly equal to the pairwise
ranking statistic (ties counting one half).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .adapters import normalize_filename
from .manifest import UnifiedManifest, UnprojectedRecordError

MACRO_CURVE_GRID_POINTS = 1001
REPORT_DECIMALS = 6


class MetricsError(ValueError):
    """Base class for evaluation failures."""


class MissingPredictionError(MetricsError):
    def __init__(self, record_ids: Sequence[str]):
        self.record_ids = list(record_ids)
        shown = ", ".join(repr(r) for r in self.record_ids[:10])
        extra = "" if len(self.record_ids) <= 10 else \
            f" (+{len(self.record_ids) - 10} more)"
        super().__init__(f"records without prediction rows: {shown}{extra}")


class ClassOrderMismatchError(MetricsError):
    pass


class DegenerateLabelsError(MetricsError):
    """All labels positive or all negative; AUC undefined."""


class EmptyMatrixError(MetricsError):
    pass


class OutOfRangeError(MetricsError):
    pass


class PredictionFormatError(MetricsError):
    pass


class NoPositivesError(MetricsError):
    pass


@dataclass(slots=True)
class PredictionSet:
    class_order: list[str]
    rows: dict[str, np.ndarray]     # record_id -> score vector

    def __post_init__(self):
        width = len(self.class_order)
        for rid, vec in self.rows.items():
            if len(vec) != width:
                raise PredictionFormatError(
                    f"row {rid!r} has {len(vec)} scores, expected {width}")
            if not np.all(np.isfinite(vec)):
                raise PredictionFormatError(f"row {rid!r} has non-finite scores")


@dataclass(slots=True)
class ConfusionMatrix:
    classes: list[str]
    counts: np.ndarray              # rows = true class, columns = predicted

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(slots=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


@dataclass(slots=True)
class MetricsReport:
    class_order: list[str]
    per_class: dict[str, dict[str, Optional[float]]]
    balanced_accuracy: float
    macro_f1: float
    weighted_f1: float
    macro_auc: float
    micro_auc: float
    macro_map: float
    combined: float
    confusion: ConfusionMatrix
    roc_curves: dict[str, RocCurve]
    warnings: list[str] = field(default_factory=list)


def argmax_predict(p: PredictionSet) -> dict[str, str]:
    """Highest-scoring class per row; ties go to the lowest class index."""
    out = {}
    for rid, vec in p.rows.items():
        out[rid] = p.class_order[int(np.argmax(vec))]
    return out


def confusion_matrix(gt: Mapping[str, str], pred: Mapping[str, str],
                     classes: Sequence[str]) -> ConfusionMatrix:
    missing = [rid for rid in gt if rid not in pred]
    if missing:
        raise MissingPredictionError(missing)
    idx = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for rid, true_cls in gt.items():
        counts[idx[true_cls], idx[pred[rid]]] += 1
    return ConfusionMatrix(classes=list(classes), counts=counts)


def balanced_accuracy(cm: ConfusionMatrix,
                      warnings: Optional[list[str]] = None) -> float:
    """Mean per-class recall over classes with ground-truth support."""
    rows = cm.row_sums()
    if not np.any(rows > 0):
        raise EmptyMatrixError("confusion matrix has no ground-truth records")
    recalls = []
    for i, cls in enumerate(cm.classes):
        if rows[i] == 0:
            if warnings is not None:
                warnings.append(f"class {cls!r} has no ground-truth records; "
                                f"skipped from balanced accuracy")
            continue
        recalls.append(cm.counts[i, i] / rows[i])
    return float(sum(recalls) / len(recalls))


def f1_scores(cm: ConfusionMatrix) -> dict:
    """Per-class F1 plus macro (over supported classes) and support-weighted
    means. F1 is 0 by convention when precision and recall are both 0."""
    rows = cm.row_sums()
    if not np.any(rows > 0):
        raise EmptyMatrixError("confusion matrix has no ground-truth records")
    cols = cm.counts.sum(axis=0)
    per_class: dict[str, float] = {}
    supported: list[float] = []
    weighted_num = 0.0
    for i, cls in enumerate(cm.classes):
        tp = cm.counts[i, i]
        precision = tp / cols[i] if cols[i] > 0 else 0.0
        recall = tp / rows[i] if rows[i] > 0 else 0.0
        f1 = 0.0 if precision + recall == 0 else \
            2 * precision * recall / (precision + recall)
        per_class[cls] = float(f1)
        if rows[i] > 0:
            supported.append(f1)
            weighted_num += f1 * rows[i]
    return {
        "per_class": per_class,
        "macro_f1": float(sum(supported) / len(supported)),
        "weighted_f1": float(weighted_num / rows.sum()),
    }


def _sweep(scores: np.ndarray, labels: np.ndarray):
    """Cumulative (tp, fp) after each descending-score tie block."""
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # Last index of each tie block.
    block_ends = np.nonzero(np.diff(sorted_scores))[0]
    block_ends = np.append(block_ends, len(sorted_scores) - 1)
    tps = np.cumsum(sorted_labels)[block_ends]
    fps = (block_ends + 1) - tps
    return tps, fps


def binary_roc_auc(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """ROC curve and trapezoidal AUC, exactly the tie-aware pairwise statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            f"need both label values, got {n_pos} positives / {n_neg} negatives")
    tps, fps = _sweep(scores, labels)
    tpr = np.concatenate([[0.0], tps / n_pos])
    fpr = np.concatenate([[0.0], fps / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr=fpr, tpr=tpr, auc=auc)


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """AP over descending-score tie blocks, each block evaluated atomically."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositivesError("average precision needs at least one positive")
    tps, fps = _sweep(scores, labels)
    recall = tps / n_pos
    precision = tps / (tps + fps)
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def _upper_envelope(curve: RocCurve) -> tuple[np.ndarray, np.ndarray]:
    """Collapse vertical segments, keeping the max tpr at each distinct fpr."""
    fpr, tpr = curve.fpr, curve.tpr
    keep_fpr, keep_tpr = [], []
    for x, y in zip(fpr, tpr):
        if keep_fpr and keep_fpr[-1] == x:
            keep_tpr[-1] = max(keep_tpr[-1], y)
        else:
            keep_fpr.append(x)
            keep_tpr.append(y)
    return np.asarray(keep_fpr), np.asarray(keep_tpr)


@dataclass(slots=True)
class MulticlassAucResult:
    per_class: dict[str, Optional[float]]
    macro_auc: float
    micro_auc: float
    curves: dict[str, RocCurve]
    warnings: list[str]


def multiclass_auc(p: PredictionSet, gt: Mapping[str, str]) -> MulticlassAucResult:
    """One-vs-rest AUC per class, their unweighted macro mean, and the micro
    AUC over all flattened (score, indicator) pairs. The macro ROC curve is
    the vertical average of per-class curves on a fixed FPR grid."""
    rids = list(gt.keys())
    score_matrix = np.stack([p.rows[rid] for rid in rids])
    warnings: list[str] = []
    curves: dict[str, RocCurve] = {}
    per_class: dict[str, Optional[float]] = {}
    usable: list[str] = []
    for ci, cls in enumerate(p.class_order):
        labels = np.fromiter((1 if gt[rid] == cls else 0 for rid in rids),
                             dtype=np.int64, count=len(rids))
        try:
            curve = binary_roc_auc(score_matrix[:, ci], labels)
        except DegenerateLabelsError:
            per_class[cls] = None
            warnings.append(f"class {cls!r} skipped from AUC: needs both "
                            f"positives and negatives")
            continue
        curves[cls] = curve
        per_class[cls] = curve.auc
        usable.append(cls)
    if not usable:
        raise DegenerateLabelsError("no class has both positives and negatives")
    macro_auc = float(sum(curves[c].auc for c in usable) / len(usable))

    onehot = np.zeros_like(score_matrix, dtype=np.int64)
    cls_idx = {c: i for i, c in enumerate(p.class_order)}
    for row, rid in enumerate(rids):
        onehot[row, cls_idx[gt[rid]]] = 1
    micro_curve = binary_roc_auc(score_matrix.ravel(), onehot.ravel())
    curves["micro"] = micro_curve

    grid = np.linspace(0.0, 1.0, MACRO_CURVE_GRID_POINTS)
    mean_tpr = np.zeros_like(grid)
    for cls in usable:
        fpr, tpr = _upper_envelope(curves[cls])
        mean_tpr += np.interp(grid, fpr, tpr)
    mean_tpr /= len(usable)
    curves["macro"] = RocCurve(fpr=grid, tpr=mean_tpr, auc=macro_auc)

    return MulticlassAucResult(per_class=per_class, macro_auc=macro_auc,
                               micro_auc=micro_curve.auc, curves=curves,
                               warnings=warnings)


def macro_map(p: PredictionSet, gt: Mapping[str, str],
              warnings: Optional[list[str]] = None) -> tuple[float, dict[str, Optional[float]]]:
    """Unweighted mean AP over classes with at least one positive."""
    rids = list(gt.keys())
    score_matrix = np.stack([p.rows[rid] for rid in rids])
    per_class: dict[str, Optional[float]] = {}
    values = []
    for ci, cls in enumerate(p.class_order):
        labels = np.fromiter((1 if gt[rid] == cls else 0 for rid in rids),
                             dtype=np.int64, count=len(rids))
        if labels.sum() == 0:
            per_class[cls] = None
            if warnings is not None:
                warnings.append(f"class {cls!r} skipped from mAP: no positives")
            continue
        ap = average_precision(score_matrix[:, ci], labels)
        per_class[cls] = ap
        values.append(ap)
    if not values:
        raise NoPositivesError("no class has positives; mAP undefined")
    return float(sum(values) / len(values)), per_class


def combined_metric(macro_auc: float, balanced_acc: float) -> float:
    """Challenge ranking score: arithmetic mean of macro AUC and balanced
    accuracy."""
    for name, value in (("macro_auc", macro_auc), ("balanced_acc", balanced_acc)):
        if not (0.0 <= value <= 1.0):
            raise OutOfRangeError(f"{name} {value!r} outside [0, 1]")
    return (macro_auc + balanced_acc) / 2.0


def evaluate(p: PredictionSet, m: UnifiedManifest,
             split: Optional[str] = None,
             assignment: Optional[Mapping[str, str]] = None,
             expected_class_order: Optional[Sequence[str]] = None,
             match_by_filename: bool = False) -> MetricsReport:
    """Score a prediction set against manifest ground truth.

    The optional split filter reads the assignment when given, else each
    record's split_hint. With match_by_filename, prediction row ids are
    filename match keys rather than record ids.
    """
    if expected_class_order is not None and \
            list(expected_class_order) != list(p.class_order):
        raise ClassOrderMismatchError(
            f"prediction classes {p.class_order} != expected "
            f"{list(expected_class_order)}")

    records = []
    for r in m.records:
        if split is not None:
            record_split = assignment.get(r.record_id) if assignment is not None \
                else r.split_hint
            if record_split != split:
                continue
        records.append(r)
    if not records:
        raise MetricsError("no records to evaluate" +
                           (f" in split {split!r}" if split else ""))

    known = set(p.class_order)
    unknown = sorted({r.canonical_class for r in records
                      if r.canonical_class is not None} - known)
    if unknown:
        raise ClassOrderMismatchError(
            f"ground-truth classes {unknown} missing from prediction columns")

    rows: dict[str, np.ndarray] = {}
    missing: list[str] = []
    seen_keys: dict[str, str] = {}
    gt_classes: dict[str, str] = {}
    for r in records:
        if r.canonical_class is None:
            raise UnprojectedRecordError(
                f"record {r.record_id!r} has no canonical_class")
        key = normalize_filename(r.file_path) if match_by_filename else r.record_id
        if match_by_filename and key in seen_keys:
            raise MetricsError(
                f"records {seen_keys[key]!r} and {r.record_id!r} share match "
                f"key {key!r}; filename matching is ambiguous")
        seen_keys[key] = r.record_id
        vec = p.rows.get(key)
        if vec is None:
            missing.append(r.record_id)
            continue
        rows[r.record_id] = vec
        gt_classes[r.record_id] = r.canonical_class
    if missing:
        raise MissingPredictionError(missing)

    scored = PredictionSet(class_order=list(p.class_order), rows=rows)
    warnings: list[str] = []
    predictions = argmax_predict(scored)
    cm = confusion_matrix(gt_classes, predictions, scored.class_order)
    bacc = balanced_accuracy(cm, warnings)
    f1 = f1_scores(cm)
    auc_result = multiclass_auc(scored, gt_classes)
    warnings.extend(auc_result.warnings)
    macro_ap, per_class_ap = macro_map(scored, gt_classes, warnings)
    combined = combined_metric(auc_result.macro_auc, bacc)

    rows_sum = cm.row_sums()
    cols_sum = cm.counts.sum(axis=0)
    per_class: dict[str, dict[str, Optional[float]]] = {}
    for i, cls in enumerate(scored.class_order):
        tp = cm.counts[i, i]
        recall = float(tp / rows_sum[i]) if rows_sum[i] > 0 else None
        precision = float(tp / cols_sum[i]) if cols_sum[i] > 0 else None
        per_class[cls] = {
            "support": int(rows_sum[i]),
            "recall": recall,
            "precision": precision,
            "f1": f1["per_class"][cls],
            "auc": auc_result.per_class[cls],
            "average_precision": per_class_ap[cls],
        }

    return MetricsReport(
        class_order=list(scored.class_order),
        per_class=per_class,
        balanced_accuracy=bacc,
        macro_f1=f1["macro_f1"],
        weighted_f1=f1["weighted_f1"],
        macro_auc=auc_result.macro_auc,
        micro_auc=auc_result.micro_auc,
        macro_map=macro_ap,
        combined=combined,
        confusion=cm,
        roc_curves=auc_result.curves,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# File formats.
# ---------------------------------------------------------------------------

def read_predictions_csv(path: str | Path) -> PredictionSet:
    """Predictions CSV: header ``id,<class_1>,...,<class_C>``."""
    with Path(path).open("r", encoding="utf-8", newline="") as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if not header or header[0] != "id" or len(header) < 3:
            raise PredictionFormatError(
                f"{path}: header must be id,<class_1>,...,<class_C>")
        class_order = header[1:]
        rows: dict[str, np.ndarray] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PredictionFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rid = row[0]
            if rid in rows:
                raise PredictionFormatError(f"{path}:{lineno}: duplicate id {rid!r}")
            try:
                vec = np.asarray([float(x) for x in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise PredictionFormatError(f"{path}:{lineno}: {exc}") from exc
            if not np.all(np.isfinite(vec)):
                raise PredictionFormatError(f"{path}:{lineno}: non-finite score")
            rows[rid] = vec
    return PredictionSet(class_order=class_order, rows=rows)


def write_predictions_csv(p: PredictionSet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["id"] + list(p.class_order))
        for rid, vec in p.rows.items():
            writer.writerow([rid] + [f"{x:.17g}" for x in vec])


def _round(x: Optional[float]) -> Optional[float]:
    if x is None:
        return None
    return round(float(x), REPORT_DECIMALS)


def report_to_json_dict(report: MetricsReport) -> dict:
    """JSON rendering with 6-decimal numbers; computation stays full precision."""
    return {
        "class_order": report.class_order,
        "balanced_accuracy": _round(report.balanced_accuracy),
        "macro_f1": _round(report.macro_f1),
        "weighted_f1": _round(report.weighted_f1),
        "macro_auc": _round(report.macro_auc),
        "micro_auc": _round(report.micro_auc),
        "macro_map": _round(report.macro_map),
        "combined": _round(report.combined),
        "per_class": {
            cls: {k: (_round(v) if isinstance(v, float) else v)
                  for k, v in vals.items()}
            for cls, vals in report.per_class.items()
        },
        "confusion": report.confusion.counts.tolist(),
        "warnings": report.warnings,
    }


def write_report_files(report: MetricsReport, out_dir: str | Path) -> list[Path]:
    """report.json, confusion.csv, and per-curve ROC CSVs under *out_dir*."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = out / "report.json"
    report_path.write_text(
        json.dumps(report_to_json_dict(report), indent=2, sort_keys=True,
                   ensure_ascii=False) + "\n", encoding="utf-8")
    written.append(report_path)

    cm_path = out / "confusion.csv"
    lines = ["true\\pred," + ",".join(report.confusion.classes)]
    for i, cls in enumerate(report.confusion.classes):
        lines.append(cls + "," + ",".join(str(int(x))
                                          for x in report.confusion.counts[i]))
    cm_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(cm_path)

    for name, curve in report.roc_curves.items():
        curve_path = out / f"roc_{name}.csv"
        rows = ["fpr,tpr"]
        rows.extend(f"{x:.6f},{y:.6f}" for x, y in zip(curve.fpr, curve.tpr))
        curve_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        written.append(curve_path)
    return written
