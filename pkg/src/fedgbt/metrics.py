"""Classification metrics for run reports."""

from __future__ import annotations

import numpy as np


def predicted_classes(margins: np.ndarray) -> np.ndarray:
    return np.argmax(margins, axis=1)


def accuracy(labels: np.ndarray, predictions: np.ndarray) -> float:
    return float(np.mean(labels == predictions))


def per_class_f1(labels: np.ndarray, predictions: np.ndarray, n_classes: int) -> np.ndarray:
    """F1 per class; a class with no true or predicted samples scores 0."""
    f1 = np.zeros(n_classes)
    for k in range(n_classes):
        tp = np.sum((predictions == k) & (labels == k))
        fp = np.sum((predictions == k) & (labels != k))
        fn = np.sum((predictions != k) & (labels == k))
        denom = 2 * tp + fp + fn
        f1[k] = (2 * tp / denom) if denom > 0 else 0.0
    return f1


def macro_f1(labels: np.ndarray, predictions: np.ndarray, n_classes: int) -> float:
    """Unweighted mean of per-class F1 scores."""
    return float(np.mean(per_class_f1(labels, predictions, n_classes)))
