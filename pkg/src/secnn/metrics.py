"""Classification metrics: weighted P/R/F1, confusion matrix, ROC-AUC and AP."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .functional import softmax


class LabelOutOfRange(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class SingleClassInput(ValueError):
    pass


class NoPositives(ValueError):
    pass


class UndefinedMetricWarning(UserWarning):
    """A precision/recall/F1 denominator was zero; the value was reported as 0."""


def _as_labels(y, k=None, name="labels"):
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if k is not None and y.size and (y.min() < 0 or y.max() >= k):
        raise LabelOutOfRange(f"{name} must lie in [0, {k})")
    return y


def confusion_matrix(true_labels, pred_labels, k: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    t = _as_labels(true_labels, k, "true labels")
    p = _as_labels(pred_labels, k, "predictions")
    if t.shape != p.shape:
        raise ValueError("true and predicted label counts differ")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


@dataclass
class Curve:
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray
    area: float
    x_name: str = "x"
    y_name: str = "y"

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"{self.x_name},{self.y_name}\n")
            for a, b in zip(self.x, self.y):
                fh.write(f"{a:.6f},{b:.6f}\n")


@dataclass
class ClassificationReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray
    roc: Curve | None = None
    pr: Curve | None = None
    undefined: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "per_class": [
                {"precision": float(p), "recall": float(r), "f1": float(f), "support": int(s)}
                for p, r, f, s in zip(self.precision, self.recall, self.f1, self.support)],
            "confusion": self.confusion.tolist(),
            "undefined": self.undefined,
        }
        if self.roc is not None:
            d["roc_auc"] = self.roc.area
        if self.pr is not None:
            d["average_precision"] = self.pr.area
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_text(self, class_names=None) -> str:
        k = len(self.support)
        names = list(class_names) if class_names else [str(i) for i in range(k)]
        width = max(8, max(len(n) for n in names))
        lines = [f"{'class':<{width}}  precision  recall      f1  support"]
        for i in range(k):
            lines.append(f"{names[i]:<{width}}  {self.precision[i]:9.4f}  {self.recall[i]:6.4f}"
                         f"  {self.f1[i]:6.4f}  {self.support[i]:7d}")
        lines.append(f"{'weighted':<{width}}  {self.weighted_precision:9.4f}"
                     f"  {self.weighted_recall:6.4f}  {self.weighted_f1:6.4f}"
                     f"  {int(self.support.sum()):7d}")
        lines.append(f"accuracy: {self.accuracy:.4f}")
        if self.roc is not None:
            lines.append(f"roc_auc: {self.roc.area:.4f}")
        if self.pr is not None:
            lines.append(f"average_precision: {self.pr.area:.4f}")
        for key, val in self.extra.items():
            lines.append(f"{key}: {val}")
        return "\n".join(lines)


def _safe_div(num, den, what, undefined):
    out = np.zeros_like(num, dtype=np.float64)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    if not ok.all():
        undefined.extend(f"{what}[{i}]" for i in np.flatnonzero(~ok))
    return out


def classification_report(true_labels, pred_labels, k: int) -> ClassificationReport:
    t = _as_labels(true_labels, k, "true labels")
    if t.size == 0:
        raise EmptyInput("no samples to evaluate")
    cm = confusion_matrix(t, pred_labels, k)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    undefined: list = []
    precision = _safe_div(tp, predicted.astype(np.float64), "precision", undefined)
    recall = _safe_div(tp, support.astype(np.float64), "recall", undefined)
    f1 = _safe_div(2 * precision * recall, precision + recall, "f1", undefined)
    if undefined:
        warnings.warn(f"zero denominators reported as 0: {', '.join(undefined)}",
                      UndefinedMetricWarning, stacklevel=2)
    n = t.size
    return ClassificationReport(
        accuracy=float(np.trace(cm) / n),
        weighted_precision=float((support * precision).sum() / n),
        # support * tp / support cancels exactly; summing tp avoids the rounding
        weighted_recall=float(tp.sum() / n),
        weighted_f1=float((support * f1).sum() / n),
        precision=precision, recall=recall, f1=f1, support=support, confusion=cm,
        undefined=undefined,
    )


def _binary_inputs(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise LabelOutOfRange("binary labels must be 0 or 1")
    return s, y.astype(np.int64)


def _threshold_counts(s, y):
    """Cumulative TP / FP at each distinct score, highest threshold first."""
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return tp, fp, s[last]


def roc_curve_auc(scores, labels) -> tuple[Curve, float]:
    """ROC over every distinct threshold, area by the trapezoid rule.

    Tied scores move TPR and FPR together, which is what makes the area equal
    P(positive > negative) + P(tie) / 2.
    """
    s, y = _binary_inputs(scores, labels)
    pos = int(y.sum())
    neg = y.size - pos
    if pos == 0 or neg == 0:
        raise SingleClassInput("ROC needs both classes present")
    tp, fp, thr = _threshold_counts(s, y)
    tpr = np.r_[0.0, tp / pos]
    fpr = np.r_[0.0, fp / neg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    curve = Curve(fpr, tpr, np.r_[np.inf, thr], auc, "fpr", "tpr")
    return curve, auc


def pr_curve_ap(scores, labels) -> tuple[Curve, float]:
    """Precision/recall at each distinct threshold; AP = sum (R_i - R_{i-1}) * P_i."""
    s, y = _binary_inputs(scores, labels)
    pos = int(y.sum())
    if pos == 0:
        raise NoPositives("average precision needs at least one positive")
    tp, fp, thr = _threshold_counts(s, y)
    precision = tp / (tp + fp)
    recall = tp / pos
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    curve = Curve(recall, precision, thr, ap, "recall", "precision")
    return curve, ap


def predict_logits(logits) -> tuple[np.ndarray, np.ndarray]:
    """Softmax probabilities and argmax predictions (ties go to the lowest index)."""
    z = np.asarray(logits.data if hasattr(logits, "data") else logits, dtype=np.float64)
    probs = softmax(z)
    return probs.argmax(axis=1), probs


def predict(model, batches) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eval-mode pass over ``(images, labels)`` batches.

    Returns true labels, predictions and softmax probabilities.
    """
    ys, preds, probs = [], [], []
    for images, labels in batches:
        pred, prob = predict_logits(model.forward(images, "eval"))
        ys.append(np.asarray(labels))
        preds.append(pred)
        probs.append(prob)
    return np.concatenate(ys), np.concatenate(preds), np.concatenate(probs)
