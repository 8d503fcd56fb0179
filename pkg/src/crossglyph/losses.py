"""Training losses: supervised classification, domain adversarial scoring,
pseudo-label consistency, and the class-transition discriminative loss.

All losses are pure functions of tensors and differentiate end to end
through the tape. The classification-style losses consume logits and
apply a shifted log-softmax internally; the adversarial loss has a
probability-space form (for diagnostics and its stated contract) and a
logit-space form (numerically safe, used by the training loop).
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else ag.tensor(x)


def source_classification_loss(logits, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    logits = _lift(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ag.ShapeError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"label out of range [0, {classes})")
    logp = ag.log_softmax_rows(logits)
    return ag.neg(ag.take_per_row(logp, labels).mean())


def adversarial_loss(src_scores, tgt_scores) -> Tensor:
    """mean log(src) + mean log(1 - tgt) on probability scores in (0, 1).

    The discriminator drives this up, the feature extractor drives it
    down through gradient reversal; its supremum is 0.
    """
    src_scores, tgt_scores = _lift(src_scores), _lift(tgt_scores)
    for name, s in (("source", src_scores), ("target", tgt_scores)):
        if s.data.size == 0:
            raise ValueError(f"{name} scores are empty")
        if np.any(s.data <= 0.0) or np.any(s.data >= 1.0):
            raise ValueError(f"{name} scores must lie strictly inside (0, 1)")
    return ag.add(ag.log(src_scores).mean(),
                  ag.log(ag.sub(1.0, tgt_scores)).mean())


def domain_discrimination_loss(src_logits, tgt_logits) -> Tensor:
    """Binary cross-entropy on domain logits (source labeled 1, target 0).

    Equals the negated probability-space adversarial value; minimizing it
    trains the discriminator, and the reversal node upstream makes the
    same backward pass push the extractor the other way.
    """
    src_logits, tgt_logits = _lift(src_logits), _lift(tgt_logits)
    return ag.add(ag.softplus(ag.neg(src_logits)).mean(),
                  ag.softplus(tgt_logits).mean())


def consistency_loss(strong_logits, pseudo_labels) -> Tensor:
    """Cross-entropy on strong-view logits against pseudo labels.

    Entries labeled -1 contribute zero; the divisor stays the full batch
    size, so the loss scales with how many samples passed the threshold.
    """
    strong_logits = _lift(strong_logits)
    pseudo = np.asarray(pseudo_labels, dtype=np.int64)
    batch, classes = strong_logits.shape
    if pseudo.shape != (batch,):
        raise ag.ShapeError(f"pseudo labels shape {pseudo.shape} does not match logits {strong_logits.shape}")
    if pseudo.size and (pseudo.min() < -1 or pseudo.max() >= classes):
        raise ValueError(f"pseudo label out of range {{-1}} U [0, {classes})")
    keep = pseudo >= 0
    if not keep.any():
        return ag.mul(strong_logits.sum(), 0.0)  # zero with a live graph
    logp = ag.log_softmax_rows(strong_logits)
    picked = ag.take_per_row(logp, np.where(keep, pseudo, 0))
    masked = ag.mul(picked, keep.astype(np.float64))
    return ag.div(ag.neg(masked.sum()), float(batch))


def correlation_matrix(p_weak, p_strong) -> Tensor:
    """Class-correlation across views: out[i, j] = <weak column i, strong column j>."""
    p_weak, p_strong = _lift(p_weak), _lift(p_strong)
    if p_weak.shape != p_strong.shape or p_weak.data.ndim != 2:
        raise ag.ShapeError(
            f"prediction matrices must share a BxC shape, got {p_weak.shape} and {p_strong.shape}")
    return ag.column_dot(p_weak, p_strong)


def transition_matrices(corr, eps: float = 1e-12) -> tuple[Tensor, Tensor]:
    """Row-normalize the correlation matrix in both directions.

    Returns (weak-to-strong, strong-to-weak); eps keeps empty rows (a
    class that received no probability mass) from dividing by zero.
    """
    corr = _lift(corr)
    if corr.data.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ag.ShapeError(f"correlation matrix must be square, got {corr.shape}")
    if np.any(corr.data < 0.0):
        raise ValueError("correlation matrix has negative entries")
    t_ws = ag.div(corr, ag.add(corr.sum(axis=1, keepdims=True), eps))
    corr_t = ag.transpose(corr)
    t_sw = ag.div(corr_t, ag.add(corr_t.sum(axis=1, keepdims=True), eps))
    return t_ws, t_sw


def transition_loss(t_ws, t_sw) -> Tensor:
    """Half the (off-diagonal minus diagonal) mass of each transition matrix.

    For row-stochastic inputs this equals C - trace(t_ws) - trace(t_sw):
    minimized when every random-walk step stays in its own class.
    """
    t_ws, t_sw = _lift(t_ws), _lift(t_sw)
    if t_ws.shape != t_sw.shape or t_ws.data.ndim != 2 or t_ws.shape[0] != t_ws.shape[1]:
        raise ag.ShapeError(f"transition matrices must share a CxC shape, got {t_ws.shape} and {t_sw.shape}")
    eye = np.eye(t_ws.shape[0])
    total = ag.add(ag.mul(0.5, t_ws.sum()), ag.mul(0.5, t_sw.sum()))
    diag = ag.add(ag.mul(t_ws, eye).sum(), ag.mul(t_sw, eye).sum())
    return ag.sub(total, diag)


def transition_consistency_loss(p_weak, p_strong, eps: float = 1e-12) -> Tensor:
    """The discriminative loss straight from the two prediction matrices."""
    t_ws, t_sw = transition_matrices(correlation_matrix(p_weak, p_strong), eps=eps)
    return transition_loss(t_ws, t_sw)
