"""Accuracy plus macro- and support-weighted precision / recall / F1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COLUMNS = ("Acc", "macro_P", "macro_R", "macro_F1", "weighted_P", "weighted_R", "weighted_F1")


def confusion(preds, labels, num_classes=None) -> np.ndarray:
    """K x K counts, rows = true class, columns = predicted class."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have the same length")
    if num_classes is None:
        num_classes = int(max(preds.max(initial=-1), labels.max(initial=-1))) + 1
    if preds.size and (min(preds.min(), labels.min()) < 0 or max(preds.max(), labels.max()) >= num_classes):
        raise ValueError(f"class index out of range for {num_classes} classes")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


@dataclass
class MetricsReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro: tuple  # (P, R, F1)
    weighted: tuple  # (P, R, F1)

    def row(self) -> tuple:
        """Values in :data:`COLUMNS` order."""
        return (self.accuracy, *self.macro, *self.weighted)

    def as_dict(self) -> dict:
        return dict(zip(COLUMNS, (float(v) for v in self.row())))

    def table(self, name="model") -> str:
        head = f"{'':<14}{'Acc':>8} | {'macro avg P':>11} {'R':>7} {'F1':>7} | {'weighted P':>10} {'R':>7} {'F1':>7}"
        vals = [100 * v for v in self.row()]
        line = (f"{name:<14}{vals[0]:8.2f} | {vals[1]:11.2f} {vals[2]:7.2f} {vals[3]:7.2f} | "
                f"{vals[4]:10.2f} {vals[5]:7.2f} {vals[6]:7.2f}")
        return head + "\n" + line


def report(cm) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise ValueError("cannot report metrics on an empty confusion matrix")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = _ratio(tp, predicted.astype(np.float64))
    recall = _ratio(tp, support.astype(np.float64))
    f1 = _ratio(2 * precision * recall, precision + recall)
    w = support / total
    accuracy = float(tp.sum() / total)
    # sum_k (s_k / N) * (tp_k / s_k) reduces to trace / N; use that form so it equals accuracy exactly
    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        macro=(float(precision.mean()), float(recall.mean()), float(f1.mean())),
        weighted=(float(w @ precision), accuracy, float(w @ f1)),
    )


def to_csv_rows(reports: dict) -> list[str]:
    """One delimited row per named report, header first."""
    lines = ["method," + ",".join(COLUMNS)]
    for name, rep in reports.items():
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in rep.row()))
    return lines
