"""Multi-stage dilated temporal convolutional segmenter.

Each stage is a 1x1 input projection, ``layers_per_stage`` dilated residual
blocks and a 1x1 classifier. Block ``l`` applies a kernel-3 convolution with
dilation ``2**l`` (zero padded so length is preserved), a ReLU and a 1x1
convolution, then adds its input back. Stage 1 reads the raw features; every
later stage reads the softmax of the previous stage's logits.

Sequences are ``T x F`` row-major (frames are rows). A kernel-3 dilated
convolution is stored as a ``3F x F`` matrix whose row blocks multiply the
frames at ``t - d``, ``t`` and ``t + d``.

Parameter count for ``S`` stages, ``L`` layers, ``F`` maps, input ``D`` and
``C`` classes::

    stage(d_in) = d_in*F + F + L*(4*F*F + 2*F) + F*C + C
    total       = stage(D) + (S - 1) * stage(C)
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AnnotationError, ConfigError, ShapeError
from .gcn import glorot_uniform
from .losses import LossWeights, seg_loss
from .numerics import AdamState, adam_step, dtype_for, log_softmax, relu, row_softmax

SEG_LR = 0.0005


@dataclass(frozen=True)
class TcnConfig:
    input_dim: int
    num_classes: int
    num_stages: int = 2
    layers_per_stage: int = 6
    num_feature_maps: int = 64

    def __post_init__(self):
        for name, value in asdict(self).items():
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value}")

    def stage_input_dim(self, stage):
        return self.input_dim if stage == 0 else self.num_classes

    def param_count(self):
        F, L, C = self.num_feature_maps, self.layers_per_stage, self.num_classes

        def stage(d_in):
            return d_in * F + F + L * (4 * F * F + 2 * F) + F * C + C

        return stage(self.input_dim) + (self.num_stages - 1) * stage(C)

    def receptive_half_width(self):
        """Frames on either side that can influence a final-stage logit."""
        return self.num_stages * (2 ** self.layers_per_stage - 1)


def tensor_names(config):
    """Names of every weight tensor, in checkpoint order."""
    names = []
    for s in range(config.num_stages):
        names += [f"s{s}.in_w", f"s{s}.in_b"]
        for l in range(config.layers_per_stage):
            names += [f"s{s}.b{l}.dil_w", f"s{s}.b{l}.dil_b", f"s{s}.b{l}.pw_w", f"s{s}.b{l}.pw_b"]
        names += [f"s{s}.out_w", f"s{s}.out_b"]
    return names


def tensor_shapes(config):
    F, C = config.num_feature_maps, config.num_classes
    shapes = {}
    for s in range(config.num_stages):
        shapes[f"s{s}.in_w"] = (config.stage_input_dim(s), F)
        shapes[f"s{s}.in_b"] = (1, F)
        for l in range(config.layers_per_stage):
            shapes[f"s{s}.b{l}.dil_w"] = (3 * F, F)
            shapes[f"s{s}.b{l}.dil_b"] = (1, F)
            shapes[f"s{s}.b{l}.pw_w"] = (F, F)
            shapes[f"s{s}.b{l}.pw_b"] = (1, F)
        shapes[f"s{s}.out_w"] = (F, C)
        shapes[f"s{s}.out_b"] = (1, C)
    return shapes


@dataclass
class TcnParams:
    config: TcnConfig
    tensors: dict
    adam: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def __getitem__(self, name):
        return self.tensors[name]

    def block(self, stage, layer):
        p = f"s{stage}.b{layer}."
        t = self.tensors
        return t[p + "dil_w"], t[p + "dil_b"], t[p + "pw_w"], t[p + "pw_b"]

    def copy(self):
        return TcnParams(self.config, {k: v.copy() for k, v in self.tensors.items()},
                         {k: v.copy() for k, v in self.adam.items()})

    def set_optimizer(self, lr=None, weight_decay=None):
        for state in self.adam.values():
            if lr is not None:
                state.lr = lr
            if weight_decay is not None:
                state.weight_decay = weight_decay


def attach_optimizer(config, tensors, lr=SEG_LR, weight_decay=0.0):
    adam = {k: AdamState.zeros_like(v, lr=lr, weight_decay=weight_decay) for k, v in tensors.items()}
    return TcnParams(config, tensors, adam)


def tcn_init(config, seed=0, lr=SEG_LR, precision=64):
    """Glorot-uniform weights and zero biases, drawn in checkpoint order."""
    dtype = dtype_for(precision)
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(config).items():
        if name.endswith("_b"):
            tensors[name] = np.zeros(shape, dtype=dtype)
        elif name.endswith("dil_w"):
            F = shape[1]
            tensors[name] = glorot_uniform(rng, 3 * F, F, dtype)
        else:
            tensors[name] = glorot_uniform(rng, *shape, dtype)
    return attach_optimizer(config, tensors, lr=lr)


def _taps(x, dilation):
    """``[x[t-d], x[t], x[t+d]]`` side by side, zero outside the sequence."""
    T, F = x.shape
    out = np.zeros((T, 3 * F), dtype=x.dtype)
    out[:, F:2 * F] = x
    if dilation < T:
        out[dilation:, :F] = x[:T - dilation]
        out[:T - dilation, 2 * F:] = x[dilation:]
    return out


def _taps_backward(g_taps, dilation):
    T, F3 = g_taps.shape
    F = F3 // 3
    g = g_taps[:, F:2 * F].copy()
    if dilation < T:
        g[:T - dilation] += g_taps[dilation:, :F]
        g[dilation:] += g_taps[:T - dilation, 2 * F:]
    return g


def dilated_residual_block(x, weights, dilation):
    """``x + pw(relu(dilated_conv3(x)))`` for one block; ``weights`` is
    ``(dil_w, dil_b, pw_w, pw_b)``."""
    if dilation < 1:
        raise ConfigError("dilation must be at least 1")
    dil_w, dil_b, pw_w, pw_b = weights
    if dil_w.shape != (3 * x.shape[1], x.shape[1]):
        raise ShapeError(f"dilated kernel {dil_w.shape} does not fit {x.shape[1]} channels")
    return _block_forward(x, weights, dilation)[0]


def _block_forward(x, weights, dilation):
    dil_w, dil_b, pw_w, pw_b = weights
    taps = _taps(x, dilation)
    pre = taps @ dil_w + dil_b
    r = relu(pre)
    return x + r @ pw_w + pw_b, (taps, pre, r)


@dataclass
class StageTrace:
    x: np.ndarray
    blocks: list        # (taps, pre, r) per block
    hidden: np.ndarray  # last block output
    logits: np.ndarray


@dataclass
class TcnForwardTrace:
    stages: list

    @property
    def stage_logits(self):
        return [s.logits for s in self.stages]

    @property
    def penultimate(self):
        return self.stages[-1].hidden

    @property
    def probs(self):
        return row_softmax(self.stages[-1].logits)


def _stage_forward(params, s, x):
    h = x @ params[f"s{s}.in_w"] + params[f"s{s}.in_b"]
    caches = []
    for l in range(params.config.layers_per_stage):
        h, cache = _block_forward(h, params.block(s, l), 2 ** l)
        caches.append(cache)
    logits = h @ params[f"s{s}.out_w"] + params[f"s{s}.out_b"]
    return StageTrace(x, caches, h, logits)


def tcn_forward(params, features):
    x = np.asarray(getattr(features, "frames", features), dtype=params.dtype)
    if x.ndim != 2 or x.shape[1] != params.config.input_dim:
        raise ShapeError(f"segmenter expects {params.config.input_dim}-dim features, got shape {x.shape}")
    stages = []
    for s in range(params.config.num_stages):
        trace = _stage_forward(params, s, x)
        stages.append(trace)
        x = row_softmax(trace.logits)
    return TcnForwardTrace(stages)


def _stage_backward(params, s, trace, g_logits, grads):
    t = params.tensors
    h = trace.hidden
    grads[f"s{s}.out_w"] = h.T @ g_logits
    grads[f"s{s}.out_b"] = g_logits.sum(axis=0, keepdims=True)
    g_h = g_logits @ t[f"s{s}.out_w"].T
    for l in reversed(range(params.config.layers_per_stage)):
        taps, pre, r = trace.blocks[l]
        dil_w, _, pw_w, _ = params.block(s, l)
        p = f"s{s}.b{l}."
        grads[p + "pw_w"] = r.T @ g_h
        grads[p + "pw_b"] = g_h.sum(axis=0, keepdims=True)
        g_pre = (g_h @ pw_w.T) * (pre > 0)
        grads[p + "dil_w"] = taps.T @ g_pre
        grads[p + "dil_b"] = g_pre.sum(axis=0, keepdims=True)
        g_h = g_h + _taps_backward(g_pre @ dil_w.T, 2 ** l)
    grads[f"s{s}.in_w"] = trace.x.T @ g_h
    grads[f"s{s}.in_b"] = g_h.sum(axis=0, keepdims=True)
    return g_h @ t[f"s{s}.in_w"].T


def tcn_backward(params, features, trace, labels, timestamps=None,
                 weights=LossWeights(), conf_stages="all"):
    """Loss and per-tensor gradients for one video.

    The segmentation loss is applied to every stage's logits and averaged
    over stages; gradients flow through the softmax that links stages.
    """
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != trace.stages[0].logits.shape[0]:
        raise ShapeError("label count does not match frame count")
    if not np.any(labels >= 0):
        raise AnnotationError("no labelled frames in this video")
    stage_lp = [log_softmax(st.logits) for st in trace.stages]
    value, g_stage = seg_loss(stage_lp, labels, timestamps, weights, conf_stages)
    grads = {}
    carry = None
    for s in reversed(range(params.config.num_stages)):
        g_logits = g_stage[s] if carry is None else g_stage[s] + carry
        g_x = _stage_backward(params, s, trace.stages[s], g_logits, grads)
        if s > 0:
            p = trace.stages[s].x  # softmax of the previous logits
            carry = p * (g_x - np.sum(g_x * p, axis=1, keepdims=True))
    return value, grads


def train_seg_epoch(params, videos, weights=LossWeights(), batch_size=8, rng=None,
                    conf_stages="all"):
    """One pass over ``videos``: a list of ``(features, labels, timestamps)``.

    Gradients are averaged within each mini-batch, then every tensor takes
    one ADAM step. Returns the mean pre-update loss over videos.
    """
    if not videos:
        raise ConfigError("segmenter training batch is empty")
    order = np.arange(len(videos))
    if rng is not None:
        rng.shuffle(order)
    total = 0.0
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        acc = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        for k in idx:
            feats, labels, stamps = videos[k]
            trace = tcn_forward(params, feats)
            value, grads = tcn_backward(params, feats, trace, labels, stamps, weights, conf_stages)
            total += value
            for name, g in grads.items():
                acc[name] += g
        for name, tensor in params.tensors.items():
            adam_step(tensor, acc[name] / len(idx), params.adam[name])
    return total / len(videos)


def predict(params, features):
    """Framewise argmax of the final stage; ties go to the lowest class."""
    trace = tcn_forward(params, features)
    return np.argmax(trace.stages[-1].logits, axis=1).astype(np.int64)
