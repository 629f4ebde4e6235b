"""Two-layer graph convolutional network for dense label generation.

``probs = softmax(A relu(A X W1) W2)`` with ``A`` the normalised temporal
adjacency. The ``mlp`` variant replaces ``A`` by the identity and keeps every
other setting, which makes it the no-graph baseline.
"""
from dataclasses import dataclass

import numpy as np

from .errors import AnnotationError, ConfigError, ShapeError
from .losses import LossWeights, graph_loss
from .numerics import AdamState, adam_step, dtype_for, log_softmax, relu, row_softmax

VARIANTS = ("gcn", "mlp")
GCN_LR = 0.01
GCN_WEIGHT_DECAY = 0.0005


@dataclass
class GcnParams:
    w1: np.ndarray  # d_in x d_hidden
    w2: np.ndarray  # d_hidden x num_classes
    variant: str
    adam1: AdamState
    adam2: AdamState

    @property
    def d_in(self):
        return self.w1.shape[0]

    @property
    def d_hidden(self):
        return self.w1.shape[1]

    @property
    def num_classes(self):
        return self.w2.shape[1]

    @property
    def dtype(self):
        return self.w1.dtype

    def copy(self):
        return GcnParams(self.w1.copy(), self.w2.copy(), self.variant,
                         self.adam1.copy(), self.adam2.copy())

    def set_optimizer(self, lr=None, weight_decay=None):
        for state in (self.adam1, self.adam2):
            if lr is not None:
                state.lr = lr
            if weight_decay is not None:
                state.weight_decay = weight_decay


@dataclass
class GcnForwardTrace:
    ax: np.ndarray      # A X
    h1_pre: np.ndarray  # A X W1
    h1: np.ndarray      # relu(h1_pre)
    ah1: np.ndarray     # A h1
    logits: np.ndarray
    log_probs: np.ndarray
    probs: np.ndarray


def glorot_uniform(rng, fan_in, fan_out, dtype=np.float64):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def gcn_init(d_in=64, d_hidden=32, num_classes=None, variant="gcn", seed=0,
             lr=GCN_LR, weight_decay=GCN_WEIGHT_DECAY, precision=64):
    if num_classes is None or min(d_in, d_hidden, num_classes) < 1:
        raise ConfigError("GCN dimensions must all be at least 1")
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
    dtype = dtype_for(precision)
    rng = np.random.default_rng(seed)
    w1 = glorot_uniform(rng, d_in, d_hidden, dtype)
    w2 = glorot_uniform(rng, d_hidden, num_classes, dtype)
    hyper = dict(lr=lr, weight_decay=weight_decay)
    return GcnParams(w1, w2, variant, AdamState.zeros_like(w1, **hyper),
                     AdamState.zeros_like(w2, **hyper))


def _propagator(params, graph, num_frames):
    if params.variant == "mlp":
        return None
    if graph.num_nodes != num_frames:
        raise ShapeError(f"graph has {graph.num_nodes} nodes but video has {num_frames} frames")
    return graph


def _prop(graph, x):
    return x if graph is None else graph.propagate(x)


def gcn_forward(params, graph, features):
    x = np.asarray(getattr(features, "frames", features), dtype=params.dtype)
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ShapeError(f"GCN expects {params.d_in}-dim features, got shape {x.shape}")
    a_hat = _propagator(params, graph, x.shape[0])
    ax = _prop(a_hat, x)
    h1_pre = ax @ params.w1
    h1 = relu(h1_pre)
    ah1 = _prop(a_hat, h1)
    logits = ah1 @ params.w2
    return GcnForwardTrace(ax, h1_pre, h1, ah1, logits, log_softmax(logits), row_softmax(logits))


def gcn_backward(params, graph, features, trace, labels, weights=LossWeights()):
    """Loss and ``(grad_w1, grad_w2)`` for one video.

    The loss is classification on labelled frames plus ``weights.alpha``
    times the smoothing term over all frames.
    """
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != trace.logits.shape[0]:
        raise ShapeError("label count does not match frame count")
    if not np.any(labels >= 0):
        raise AnnotationError("no labelled frames in this video")
    value, g_logits = graph_loss(trace.log_probs, labels, weights)
    a_hat = _propagator(params, graph, trace.logits.shape[0])
    g_w2 = trace.ah1.T @ g_logits
    # A is symmetric, so A^T g = A g
    g_h1 = _prop(a_hat, g_logits @ params.w2.T)
    g_pre = g_h1 * (trace.h1_pre > 0)
    g_w1 = trace.ax.T @ g_pre
    return value, (g_w1, g_w2)


def _batches(n, batch_size, rng):
    order = np.arange(n)
    if rng is not None:
        rng.shuffle(order)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_gcn_epoch(params, videos, alpha=0.15, batch_size=8, rng=None, tau=4.0):
    """One pass over ``videos``: a list of ``(graph, features, timestamps)``.

    Gradients are averaged inside each mini-batch and applied with one ADAM
    step per batch. Returns the mean loss over videos, measured before each
    batch's update.
    """
    if not videos:
        raise ConfigError("GCN training batch is empty")
    weights = LossWeights(alpha=alpha, beta=0.0, tau=tau)
    total = 0.0
    for idx in _batches(len(videos), batch_size, rng):
        g1 = np.zeros_like(params.w1)
        g2 = np.zeros_like(params.w2)
        for k in idx:
            graph, feats, stamps = videos[k]
            x = getattr(feats, "frames", feats)
            labels = stamps.sparse_labels(x.shape[0])
            trace = gcn_forward(params, graph, x)
            value, (d1, d2) = gcn_backward(params, graph, x, trace, labels, weights)
            total += value
            g1 += d1
            g2 += d2
        adam_step(params.w1, g1 / len(idx), params.adam1)
        adam_step(params.w2, g2 / len(idx), params.adam2)
    return total / len(videos)


def generate_labels(params, graph, features, timestamps=None):
    """Framewise argmax labels; annotated frames keep their timestamp class."""
    trace = gcn_forward(params, graph, features)
    labels = np.argmax(trace.probs, axis=1).astype(np.int64)
    if timestamps is not None:
        labels[timestamps.frames] = timestamps.classes
    return labels
