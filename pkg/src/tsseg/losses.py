"""Training objectives and their gradients.

Every loss takes framewise log-probabilities (``log_softmax`` of the logits)
and returns ``(value, grad)`` where ``grad`` is the gradient with respect to
the *logits* that produced those log-probabilities.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import UNLABELED
from .errors import AnnotationError, ConfigError, ShapeError


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.15   # smoothing
    beta: float = 0.075   # confidence
    tau: float = 4.0      # smoothing truncation

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("loss weights alpha and beta must be non-negative")
        if self.tau <= 0:
            raise ConfigError("truncation tau must be positive")


def logit_grad(log_probs, grad_lp):
    """Chain a gradient w.r.t. log-softmax outputs back to the logits."""
    probs = np.exp(log_probs)
    return grad_lp - probs * grad_lp.sum(axis=1, keepdims=True)


def class_loss(log_probs, labels):
    """Mean negative log-likelihood over labelled frames.

    ``labels`` holds a class id per frame, or ``UNLABELED`` (-1) for frames
    without a target.
    """
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != log_probs.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {log_probs.shape[0]} frames")
    idx = np.flatnonzero(labels != UNLABELED)
    if idx.size == 0:
        raise AnnotationError("classification loss needs at least one labelled frame")
    targets = labels[idx]
    value = -float(np.mean(log_probs[idx, targets]))
    grad_lp = np.zeros_like(log_probs)
    grad_lp[idx, targets] = -1.0 / idx.size
    return value, logit_grad(log_probs, grad_lp)


def smooth_loss(log_probs, tau=4.0):
    """Truncated squared difference of adjacent log-probabilities, over T*C.

    Differences whose magnitude exceeds ``tau`` contribute ``tau**2`` and no
    gradient; at exactly ``tau`` the untruncated branch applies.
    """
    T, C = log_probs.shape
    if T < 2:
        return 0.0, np.zeros_like(log_probs)
    d = log_probs[1:] - log_probs[:-1]
    active = np.abs(d) <= tau
    sq = np.where(active, d * d, tau * tau)
    scale = 1.0 / (T * C)
    value = float(sq.sum()) * scale
    g = np.where(active, 2.0 * d * scale, 0.0)
    grad_lp = np.zeros_like(log_probs)
    grad_lp[1:] += g
    grad_lp[:-1] -= g
    return value, logit_grad(log_probs, grad_lp)


def conf_loss(log_probs, timestamps):
    """Hinge penalty on non-monotone confidence around each timestamp.

    Normalised by ``2 * (last_timestamp - first_timestamp)``; a single
    timestamp gives zero loss.
    """
    frames = np.asarray(timestamps.frames, dtype=np.int64)
    classes = np.asarray(timestamps.classes, dtype=np.int64)
    if np.any(np.diff(frames) <= 0):
        raise AnnotationError("timestamp frames must be strictly increasing")
    if frames.size and frames[-1] >= log_probs.shape[0]:
        raise AnnotationError("timestamp outside the video")
    span = 2 * (int(frames[-1]) - int(frames[0])) if frames.size else 0
    if span == 0:
        return 0.0, np.zeros_like(log_probs)
    total, grad_lp = _kernels.conf_hinge(log_probs, frames, classes)
    grad_lp = grad_lp.astype(log_probs.dtype, copy=False) / span
    return total / span, logit_grad(log_probs, grad_lp)


def graph_loss(log_probs, labels, weights=LossWeights()):
    """Classification plus weighted smoothing, as used for the label-generation network."""
    value, grad = class_loss(log_probs, labels)
    if weights.alpha:
        sv, sg = smooth_loss(log_probs, weights.tau)
        value += weights.alpha * sv
        grad = grad + weights.alpha * sg
    return value, grad


def seg_loss(stage_log_probs, labels, timestamps=None, weights=LossWeights(), conf_stages="all"):
    """Segmenter objective, averaged over stages.

    Each stage contributes classification + alpha*smoothing + beta*confidence.
    ``conf_stages="last"`` restricts the confidence term to the final stage.
    Returns the scalar value and one logit gradient per stage.
    """
    if isinstance(stage_log_probs, np.ndarray):
        stage_log_probs = [stage_log_probs]
    if conf_stages not in ("all", "last"):
        raise ConfigError("conf_stages must be 'all' or 'last'")
    if weights.beta and timestamps is None:
        raise AnnotationError("confidence loss needs timestamps")
    n = len(stage_log_probs)
    total = 0.0
    grads = []
    for s, lp in enumerate(stage_log_probs):
        value, grad = graph_loss(lp, labels, weights)
        if weights.beta and (conf_stages == "all" or s == n - 1):
            cv, cg = conf_loss(lp, timestamps)
            value += weights.beta * cv
            grad = grad + weights.beta * cg
        total += value
        grads.append(grad / n)
    return total / n, grads
