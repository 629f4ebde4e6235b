"""Framewise accuracy, segmental edit score and F1@k.

Segments are ``(label, start, end)`` with 0-based inclusive frame bounds.
Dataset-level scores average Acc and Edit over videos and pool TP/FP/FN
across videos for F1.
"""
from collections import namedtuple

import numpy as np

from . import _kernels
from .errors import ShapeError

Segment = namedtuple("Segment", ["label", "start", "end"])

F1_THRESHOLDS = (0.10, 0.25, 0.50)
METRIC_NAMES = ("F1@10", "F1@25", "F1@50", "Edit", "Acc")


def segments_from_labels(labels):
    """Run-length encode a framewise labelling into maximal segments."""
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        return []
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change - 1, [labels.size - 1]))
    return [Segment(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def labels_from_segments(segments):
    out = []
    for seg in segments:
        out.extend([seg.label] * (seg.end - seg.start + 1))
    return np.array(out, dtype=np.int64)


def _check_pair(pred, gt):
    pred = np.asarray(pred).reshape(-1)
    gt = np.asarray(gt).reshape(-1)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction has {pred.size} frames but ground truth has {gt.size}")
    return pred, gt


def _drop(segments, ignore):
    if ignore is None:
        return segments
    return [s for s in segments if s.label not in ignore]


def _as_ignore(ignore_classes):
    if ignore_classes is None:
        return None
    return set(int(c) for c in ignore_classes)


def accuracy(pred, gt, ignore_classes=None):
    pred, gt = _check_pair(pred, gt)
    keep = np.ones(gt.shape, dtype=bool)
    ignore = _as_ignore(ignore_classes)
    if ignore:
        keep = ~np.isin(gt, list(ignore))
    total = int(keep.sum())
    if total == 0:
        return 0.0
    return 100.0 * float(np.sum((pred == gt) & keep)) / total


def edit_score(pred, gt, ignore_classes=None):
    pred, gt = _check_pair(pred, gt)
    ignore = _as_ignore(ignore_classes)
    p = [s.label for s in _drop(segments_from_labels(pred), ignore)]
    g = [s.label for s in _drop(segments_from_labels(gt), ignore)]
    longest = max(len(p), len(g))
    if longest == 0:
        return 100.0
    dist = _kernels.levenshtein(np.array(p, dtype=np.int64), np.array(g, dtype=np.int64))
    return max(0.0, 100.0 * (1.0 - dist / longest))


def _segment_arrays(segments):
    if not segments:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    arr = np.array(segments, dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def f1_counts(pred, gt, threshold, ignore_classes=None):
    """Greedy matching counts ``(tp, fp, fn)`` at an IoU threshold."""
    pred, gt = _check_pair(pred, gt)
    ignore = _as_ignore(ignore_classes)
    ps = _segment_arrays(_drop(segments_from_labels(pred), ignore))
    gs = _segment_arrays(_drop(segments_from_labels(gt), ignore))
    return _kernels.greedy_f1_counts(*ps, *gs, float(threshold))


def f1_from_counts(tp, fp, fn):
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 200.0 * float(tp) / float(denom)


def f1_at(pred, gt, threshold, ignore_classes=None):
    return f1_from_counts(*f1_counts(pred, gt, threshold, ignore_classes))


def evaluate(pairs, ignore_classes=None):
    """Score a list of ``(pred, gt)`` label pairs.

    Returns a dict keyed by :data:`METRIC_NAMES`.
    """
    pairs = list(pairs)
    if not pairs:
        raise ShapeError("nothing to evaluate")
    accs, edits = [], []
    counts = {thr: np.zeros(3, dtype=np.int64) for thr in F1_THRESHOLDS}
    for pred, gt in pairs:
        accs.append(accuracy(pred, gt, ignore_classes))
        edits.append(edit_score(pred, gt, ignore_classes))
        for thr in F1_THRESHOLDS:
            counts[thr] += f1_counts(pred, gt, thr, ignore_classes)
    scores = {f"F1@{round(thr * 100)}": f1_from_counts(*counts[thr]) for thr in F1_THRESHOLDS}
    scores["Edit"] = float(np.mean(edits))
    scores["Acc"] = float(np.mean(accs))
    return scores


def format_table(scores, title=None):
    header = " ".join(f"{name:>7}" for name in METRIC_NAMES)
    values = " ".join(f"{scores[name]:7.2f}" for name in METRIC_NAMES)
    lines = [header, values]
    if title:
        lines.insert(0, title)
    return "\n".join(lines) + "\n"


def format_csv(scores, split=None):
    prefix = f"{split}/" if split else ""
    return "".join(f"{prefix}{name},{scores[name]:.6f}\n" for name in METRIC_NAMES)
