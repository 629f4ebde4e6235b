# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_fallback.py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def levenshtein(a, b):
    cdef long[:] av = np.ascontiguousarray(a, dtype=np.int_)
    cdef long[:] bv = np.ascontiguousarray(b, dtype=np.int_)
    cdef Py_ssize_t m = av.shape[0], n = bv.shape[0], i, j
    cdef long[:] prev = np.arange(n + 1, dtype=np.int_)
    cdef long[:] cur = np.zeros(n + 1, dtype=np.int_)
    cdef long[:] tmp
    cdef long best, cost
    for i in range(1, m + 1):
        cur[0] = i
        for j in range(1, n + 1):
            cost = 0 if av[i - 1] == bv[j - 1] else 1
            best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            if prev[j - 1] + cost < best:
                best = prev[j - 1] + cost
            cur[j] = best
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[n])


def greedy_f1_counts(p_label, p_start, p_end, g_label, g_start, g_end, double threshold):
    cdef long[:] pl = np.ascontiguousarray(p_label, dtype=np.int_)
    cdef long[:] ps = np.ascontiguousarray(p_start, dtype=np.int_)
    cdef long[:] pe = np.ascontiguousarray(p_end, dtype=np.int_)
    cdef long[:] gl = np.ascontiguousarray(g_label, dtype=np.int_)
    cdef long[:] gs = np.ascontiguousarray(g_start, dtype=np.int_)
    cdef long[:] ge = np.ascontiguousarray(g_end, dtype=np.int_)
    cdef Py_ssize_t n_pred = pl.shape[0], n_gt = gl.shape[0], k, j
    cdef char[:] matched = np.zeros(n_gt, dtype=np.int8)
    cdef long tp = 0, fp = 0, n_matched = 0, inter, union
    cdef double iou, best_iou
    cdef Py_ssize_t best_j
    for k in range(n_pred):
        best_iou = -1.0
        best_j = -1
        for j in range(n_gt):
            if matched[j] or gl[j] != pl[k]:
                continue
            inter = min(pe[k], ge[j]) - max(ps[k], gs[j]) + 1
            if inter < 0:
                inter = 0
            union = max(pe[k], ge[j]) - min(ps[k], gs[j]) + 1
            iou = <double>inter / <double>union
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0 and best_iou >= threshold:
            tp += 1
            matched[best_j] = 1
            n_matched += 1
        else:
            fp += 1
    return int(tp), int(fp), int(n_gt - n_matched)


def conf_hinge(log_probs, frames, classes):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lp_arr = np.ascontiguousarray(log_probs, dtype=np.float64)
    cdef double[:, :] lp = lp_arr
    grad_arr = np.zeros_like(lp_arr)
    cdef double[:, :] grad = grad_arr
    cdef long[:] fr = np.ascontiguousarray(frames, dtype=np.int_)
    cdef long[:] cl = np.ascontiguousarray(classes, dtype=np.int_)
    cdef Py_ssize_t n = fr.shape[0], T = lp.shape[0], i, t
    cdef long ti, a, lo, hi
    cdef double total = 0.0, d
    for i in range(n):
        ti = fr[i]
        a = cl[i]
        lo = fr[i - 1] if i > 0 else fr[0]
        hi = fr[i + 1] if i < n - 1 else fr[n - 1]
        for t in range(lo + 1, hi + 1):
            if t - 1 < 0 or t >= T:
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
    return total, grad_arr
