"""Multiclass softmax objective: probabilities, derivatives, log-loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class GradHess:
    """Per-sample, per-class first/second derivatives of the softmax loss."""

    g: np.ndarray  # (n, K)
    h: np.ndarray  # (n, K), diagonal Hessian entries, each in [0, 0.25]


def softmax_probs(margins: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row max."""
    shifted = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_grad_hess(margins: np.ndarray, labels: np.ndarray) -> GradHess:
    """g = p - onehot(label), h = p(1-p) with p = softmax(margins).

    Cross-class Hessian terms are dropped (diagonal approximation).
    """
    margins = np.asarray(margins, dtype=np.float64)
    if margins.ndim != 2:
        raise InvalidInput("margins must be (n, K)")
    if not np.isfinite(margins).all():
        raise InvalidInput("margins must be finite")
    labels = np.asarray(labels, dtype=np.int64)
    n, k = margins.shape
    if labels.shape != (n,) or (labels.size and (labels.min() < 0 or labels.max() >= k)):
        raise InvalidInput("labels must be class indices matching margins")
    p = softmax_probs(margins)
    g = p.copy()
    g[np.arange(n), labels] -= 1.0
    h = p * (1.0 - p)
    return GradHess(g=g, h=h)


def logloss_per_sample(margins: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """-log softmax(margins)[label] per sample, computed via logsumexp."""
    margins = np.asarray(margins, dtype=np.float64)
    m = margins.max(axis=1)
    lse = m + np.log(np.exp(margins - m[:, None]).sum(axis=1))
    return lse - margins[np.arange(margins.shape[0]), labels]


def mean_logloss(margins: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sum(logloss_per_sample(margins, labels)) / margins.shape[0])


def sketch_weights(h: np.ndarray) -> np.ndarray:
    """Per-sample quantile-sketch weight: the class-summed Hessian."""
    return h.sum(axis=1)
