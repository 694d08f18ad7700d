"""Overall accuracy, Cohen's kappa and confusion matrices."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


def confusion_matrix(y_true, y_pred, class_count: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    out = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(out, (y_true, y_pred), 1)
    return out


def overall_accuracy(confusion) -> float:
    confusion = np.asarray(confusion)
    return float(np.trace(confusion) / confusion.sum())


def kappa(confusion) -> float:
    """Cohen's kappa ``(p_o - p_e) / (1 - p_e)``; 0 when ``p_e == 1``."""
    c = np.asarray(confusion, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.size == 0:
        raise ValueError("confusion matrix must be square and non-empty")
    if np.any(c < 0):
        raise ValueError("confusion matrix has negative entries")
    total = c.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty (total count 0)")
    p_o = np.trace(c) / total
    p_e = float(c.sum(axis=1) @ c.sum(axis=0)) / total**2
    if p_e == 1.0:
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


@dataclass
class EvalReport:
    overall_accuracy: float
    kappa: float
    confusion: np.ndarray
    per_class_accuracy: np.ndarray

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_count: int) -> "EvalReport":
        conf = confusion_matrix(y_true, y_pred, class_count)
        rows = conf.sum(axis=1)
        per_class = np.divide(np.diag(conf), rows, out=np.zeros(class_count), where=rows > 0)
        return cls(overall_accuracy(conf), kappa(conf), conf, per_class)

    def to_text(self) -> str:
        lines = [
            f"overall_accuracy={self.overall_accuracy!r}",
            f"kappa={self.kappa!r}",
            "per_class_accuracy=" + ",".join(repr(float(v)) for v in self.per_class_accuracy),
            f"classes={self.confusion.shape[0]}",
            "confusion:",
        ]
        lines += [" ".join(str(int(v)) for v in row) for row in self.confusion]
        return "\n".join(lines) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text())
        return path

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        head, _, body = text.partition("confusion:\n")
        fields = dict(line.split("=", 1) for line in head.splitlines() if "=" in line)
        conf = np.array([[int(v) for v in row.split()] for row in body.splitlines() if row.strip()], dtype=np.int64)
        per_class = np.array([float(v) for v in fields["per_class_accuracy"].split(",")])
        return cls(float(fields["overall_accuracy"]), float(fields["kappa"]), conf, per_class)
