"""Confidence-thresholded pseudo labels and their diagnostics.

A sample earns a pseudo label only when its top predicted probability
strictly exceeds the threshold; everything else is marked -1 and skipped
by the consistency loss. Mask rate and purity summarize how many samples
pass and how often they are right; purity needs ground truth and exists
for evaluation streams only.
"""

from __future__ import annotations

import numpy as np

ABSTAIN = -1


def _check_predictions(pred) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 2:
        raise ValueError(f"expected a BxC prediction matrix, got shape {pred.shape}")
    return pred


def _check_threshold(threshold: float) -> float:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return float(threshold)


def assign_pseudo_labels(weak_pred, threshold: float = 0.95) -> np.ndarray:
    """argmax of each row when its max strictly exceeds the threshold, else -1.

    Ties resolve to the lowest class index, so assignment is deterministic.
    """
    pred = _check_predictions(weak_pred)
    threshold = _check_threshold(threshold)
    top = pred.max(axis=1)
    labels = pred.argmax(axis=1).astype(np.int64)
    labels[top <= threshold] = ABSTAIN
    return labels


def mask_rate(weak_pred, threshold: float = 0.95) -> float:
    """Fraction of samples whose confidence clears the threshold."""
    pred = _check_predictions(weak_pred)
    threshold = _check_threshold(threshold)
    if pred.shape[0] == 0:
        raise ValueError("mask_rate of an empty batch")
    return float(np.mean(pred.max(axis=1) > threshold))


def purity(weak_pred, threshold: float, truth_labels) -> float | None:
    """Fraction of pseudo-labeled samples whose label matches the truth.

    Returns None when nothing passed the threshold, so metric streams can
    tell "no pseudo labels yet" apart from "all of them wrong".
    """
    pred = _check_predictions(weak_pred)
    threshold = _check_threshold(threshold)
    truth = np.asarray(truth_labels, dtype=np.int64)
    if truth.shape != (pred.shape[0],):
        raise ValueError(f"truth labels shape {truth.shape} does not match predictions {pred.shape}")
    passed = pred.max(axis=1) > threshold
    if not passed.any():
        return None
    correct = pred.argmax(axis=1)[passed] == truth[passed]
    return float(np.mean(correct))
