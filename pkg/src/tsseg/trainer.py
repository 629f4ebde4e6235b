"""Alternating training of the segmenter and the label-generation GCN.

Initialisation trains the segmenter on sparse timestamps only. Each
refinement iteration then (1) extracts the segmenter's penultimate features,
(2) builds a temporal graph per video from them, (3) trains the GCN on the
timestamps, (4) turns its predictions into dense labels and (5) trains the
segmenter on those labels, with the confidence term still anchored to the
original timestamps. Evaluation only ever touches the segmenter.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericalError
from .gcn import GCN_LR, GCN_WEIGHT_DECAY, gcn_init, generate_labels, train_gcn_epoch
from .graph import build_graph
from .losses import LossWeights
from .metrics import accuracy, evaluate
from .segmenter import SEG_LR, TcnConfig, predict, tcn_forward, tcn_init, train_seg_epoch

log = logging.getLogger(__name__)

LOG_HEADER = "stage,iteration,epoch,loss,label_acc"


@dataclass(frozen=True)
class ScheduleConfig:
    init_epochs: int = 30
    refine_iters: int = 20
    gcn_epochs_per_iter: int = 300
    seg_epochs_per_iter: int = 3
    alpha: float = 0.15
    beta: float = 0.075
    tau: float = 4.0
    seg_lr: float = SEG_LR
    gcn_lr: float = GCN_LR
    gcn_weight_decay: float = GCN_WEIGHT_DECAY
    batch_size: int = 8
    seed: int = 0
    window: int = 31
    edge_mode: str = "weighted"
    gcn_variant: str = "gcn"
    gcn_hidden: int = 32
    gcn_reinit: bool = False
    num_stages: int = 2
    layers_per_stage: int = 6
    num_feature_maps: int = 64
    conf_stages: str = "all"
    shuffle: bool = True
    precision: int = 32
    workers: int = 1

    def __post_init__(self):
        counts = ("init_epochs", "refine_iters", "gcn_epochs_per_iter", "seg_epochs_per_iter")
        for name in counts:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.init_epochs + self.refine_iters <= 0:
            raise ConfigError("schedule has neither initialisation epochs nor refinement iterations")
        if self.batch_size < 1 or self.workers < 1:
            raise ConfigError("batch size and worker count must be at least 1")
        if self.gcn_reinit and self.refine_iters == 0:
            raise ConfigError("--gcn-reinit has no effect without refinement iterations")
        LossWeights(self.alpha, self.beta, self.tau)

    @property
    def loss_weights(self):
        return LossWeights(self.alpha, self.beta, self.tau)

    @classmethod
    def synthetic_preset(cls, **overrides):
        """Desk-scale schedule: fewer GCN epochs per refinement iteration."""
        return cls(**{"gcn_epochs_per_iter": 60, **overrides})


@dataclass
class RunRecord:
    config: dict
    seed: int
    rows: list = field(default_factory=list)  # (stage, iteration, epoch, loss, label_acc)
    label_acc: list = field(default_factory=list)
    final_metrics: dict = None

    def losses(self, stage):
        return [r[3] for r in self.rows if r[0] == stage]

    def seg_epochs(self):
        return sum(1 for r in self.rows if r[0] in ("init", "seg"))

    def gcn_epochs(self):
        return sum(1 for r in self.rows if r[0] == "gcn")

    def to_json(self):
        return json.dumps({
            "config": self.config,
            "seed": self.seed,
            "label_acc": self.label_acc,
            "final_metrics": self.final_metrics,
        }, indent=2, sort_keys=True) + "\n"


def format_row(row):
    stage, it, epoch, loss, acc = row
    acc_s = "" if acc is None else repr(float(acc))
    return f"{stage},{it},{epoch},{float(loss)!r},{acc_s}"


class RunLog:
    """Writes RunRecord rows as they happen so an aborted run leaves a partial log."""

    def __init__(self, record, stream=None):
        self.record = record
        self.stream = stream

    def add(self, stage, iteration, epoch, loss, label_acc=None):
        row = (stage, iteration, epoch, float(loss), label_acc)
        self.record.rows.append(row)
        if self.stream is not None:
            self.stream.write(format_row(row) + "\n")
            self.stream.flush()
        if not np.isfinite(loss):
            raise NumericalError(f"{stage} loss became {loss} at iteration {iteration}, epoch {epoch}")


def _pmap(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_finite(tensors, what):
    for t in tensors:
        if not np.all(np.isfinite(t)):
            raise NumericalError(f"{what} parameters became non-finite")


def make_segmenter(config, dataset):
    tcn_cfg = TcnConfig(dataset.feature_dim, dataset.num_classes, config.num_stages,
                        config.layers_per_stage, config.num_feature_maps)
    return tcn_init(tcn_cfg, seed=config.seed, lr=config.seg_lr, precision=config.precision)


def make_gcn(config, num_classes, iteration=0):
    return gcn_init(config.num_feature_maps, config.gcn_hidden, num_classes, config.gcn_variant,
                    seed=config.seed + 1 + iteration, lr=config.gcn_lr,
                    weight_decay=config.gcn_weight_decay, precision=config.precision)


def _seg_batch(videos, labels=None):
    out = []
    for k, v in enumerate(videos):
        y = v.timestamps.sparse_labels(v.num_frames) if labels is None else labels[k]
        out.append((v.features.frames, y, v.timestamps))
    return out


def initialize_stage(seg_params, videos, config, rng=None, runlog=None):
    """``config.init_epochs`` segmenter epochs on sparse timestamp labels."""
    batch = _seg_batch(videos)
    losses = []
    for epoch in range(config.init_epochs):
        loss = train_seg_epoch(seg_params, batch, config.loss_weights, config.batch_size,
                               rng if config.shuffle else None, config.conf_stages)
        losses.append(loss)
        if runlog is not None:
            runlog.add("init", 0, epoch + 1, loss)
        _check_finite(seg_params.tensors.values(), "segmenter")
    return seg_params, losses


def extract_features(seg_params, videos, workers=1):
    return _pmap(lambda v: tcn_forward(seg_params, v.features.frames).penultimate, videos, workers)


def refine_iteration(seg_params, gcn_params, videos, config, rng=None, iteration=1,
                     runlog=None, label_fn=None):
    """One GCN-train / label-generate / segmenter-train cycle.

    ``label_fn(videos, graphs, features)`` may replace steps 3-4 (used to
    plug in an oracle labeller). Returns ``(generated_labels, gcn_losses,
    seg_losses)``.
    """
    workers = config.workers
    feats = extract_features(seg_params, videos, workers)
    graphs = _pmap(lambda f: build_graph(f, config.window, config.edge_mode), feats, workers)
    gcn_losses = []
    if label_fn is None:
        gcn_batch = [(g, f, v.timestamps) for g, f, v in zip(graphs, feats, videos)]
        for epoch in range(config.gcn_epochs_per_iter):
            loss = train_gcn_epoch(gcn_params, gcn_batch, config.alpha, config.batch_size,
                                   rng if config.shuffle else None, config.tau)
            gcn_losses.append(loss)
            if runlog is not None and epoch + 1 < config.gcn_epochs_per_iter:
                runlog.add("gcn", iteration, epoch + 1, loss)
            _check_finite((gcn_params.w1, gcn_params.w2), "GCN")
        labels = _pmap(lambda k: generate_labels(gcn_params, graphs[k], feats[k], videos[k].timestamps),
                       range(len(videos)), workers)
    else:
        labels = label_fn(videos, graphs, feats)
    acc = None
    if all(v.gt is not None for v in videos):
        acc = float(np.mean([accuracy(y, v.gt) for y, v in zip(labels, videos)]))
    if runlog is not None:
        if gcn_losses:
            runlog.add("gcn", iteration, len(gcn_losses), gcn_losses[-1], acc)
        runlog.record.label_acc.append(acc)
    batch = _seg_batch(videos, labels)
    seg_losses = []
    for epoch in range(config.seg_epochs_per_iter):
        loss = train_seg_epoch(seg_params, batch, config.loss_weights, config.batch_size,
                               rng if config.shuffle else None, config.conf_stages)
        seg_losses.append(loss)
        if runlog is not None:
            runlog.add("seg", iteration, epoch + 1, loss)
        _check_finite(seg_params.tensors.values(), "segmenter")
    return labels, gcn_losses, seg_losses


def evaluate_segmenter(seg_params, videos, workers=1):
    """Acc/Edit/F1 of segmenter predictions; needs only the segmenter."""
    preds = _pmap(lambda v: predict(seg_params, v.features.frames), videos, workers)
    return evaluate(zip(preds, (v.gt for v in videos))), preds


def run(config, dataset, log_stream=None, label_fn=None):
    """Execute the full schedule.

    Returns ``(record, seg_params, gcn_params)``; ``gcn_params`` is ``None``
    when the schedule has no refinement iterations.
    """
    videos = dataset.train_videos
    if not videos:
        raise ConfigError("dataset has no training videos")
    record = RunRecord(config=asdict(config), seed=config.seed)
    runlog = RunLog(record, log_stream)
    if log_stream is not None:
        log_stream.write(LOG_HEADER + "\n")
    rng = np.random.default_rng(config.seed)
    seg = make_segmenter(config, dataset)
    initialize_stage(seg, videos, config, rng, runlog)
    gcn = None
    for it in range(1, config.refine_iters + 1):
        if gcn is None or config.gcn_reinit:
            gcn = make_gcn(config, dataset.num_classes, it - 1)
        refine_iteration(seg, gcn, videos, config, rng, it, runlog, label_fn)
        log.info("refinement %d/%d: label acc %s", it, config.refine_iters, record.label_acc[-1])
    eval_videos = dataset.eval_videos
    if all(v.gt is not None for v in eval_videos):
        record.final_metrics, _ = evaluate_segmenter(seg, eval_videos, config.workers)
    expected_seg = config.init_epochs + config.refine_iters * config.seg_epochs_per_iter
    expected_gcn = 0 if label_fn else config.refine_iters * config.gcn_epochs_per_iter
    assert record.seg_epochs() == expected_seg and record.gcn_epochs() == expected_gcn
    return record, seg, gcn


def with_schedule(config, init_epochs, refine_iters, **overrides):
    return replace(config, init_epochs=init_epochs, refine_iters=refine_iters, **overrides)
