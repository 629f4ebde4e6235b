"""Pure-Python versions of the compiled kernels in ``_core.pyx``.

Both modules expose the same functions with the same semantics; the package
picks one at import time (see ``tsseg._kernels``).
"""
import numpy as np


def levenshtein(a, b):
    """Unit-cost edit distance between two integer sequences."""
    a = [int(v) for v in a]
    b = [int(v) for v in b]
    m, n = len(a), len(b)
    prev = list(range(n + 1))
    for i in range(1, m + 1):
        cur = [i] + [0] * n
        ai = a[i - 1]
        for j in range(1, n + 1):
            cost = 0 if ai == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[n]


def greedy_f1_counts(p_label, p_start, p_end, g_label, g_start, g_end, threshold):
    """Greedy first-come segment matching; returns ``(tp, fp, fn)``.

    Segment bounds are inclusive. Each predicted segment, in order, takes the
    unmatched same-class ground-truth segment with the highest IoU; it is a
    true positive when that IoU reaches ``threshold``.
    """
    n_gt = len(g_label)
    matched = [False] * n_gt
    tp = fp = 0
    for k in range(len(p_label)):
        lab, ps, pe = int(p_label[k]), int(p_start[k]), int(p_end[k])
        best_iou = -1.0
        best_j = -1
        for j in range(n_gt):
            if matched[j] or int(g_label[j]) != lab:
                continue
            gs, ge = int(g_start[j]), int(g_end[j])
            inter = min(pe, ge) - max(ps, gs) + 1
            if inter < 0:
                inter = 0
            union = max(pe, ge) - min(ps, gs) + 1
            iou = inter / union
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0 and best_iou >= threshold:
            tp += 1
            matched[best_j] = True
        else:
            fp += 1
    return tp, fp, n_gt - sum(matched)


def conf_hinge(log_probs, frames, classes):
    """Sum of confidence hinge terms and its gradient w.r.t. ``log_probs``.

    ``frames`` are 0-based, strictly increasing timestamp positions. For
    timestamp ``i`` the window is ``(frames[i-1], frames[i+1]]`` with the ends
    clamped to the first/last timestamp. Up to and including the timestamp a
    drop in log-probability is penalised; after it, a rise is penalised.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    grad = np.zeros_like(lp)
    n = len(frames)
    total = 0.0
    for i in range(n):
        ti = int(frames[i])
        a = int(classes[i])
        lo = int(frames[i - 1]) if i > 0 else int(frames[0])
        hi = int(frames[i + 1]) if i < n - 1 else int(frames[n - 1])
        for t in range(lo + 1, hi + 1):
            if t - 1 < 0 or t >= lp.shape[0]:
                continue
            if t <= ti:
                d = lp[t - 1, a] - lp[t, a]
                if d > 0:
                    total += d
                    grad[t - 1, a] += 1.0
                    grad[t, a] -= 1.0
            else:
                d = lp[t, a] - lp[t - 1, a]
                if d > 0:
                    total += d
                    grad[t, a] += 1.0
                    grad[t - 1, a] -= 1.0
    return total, grad
