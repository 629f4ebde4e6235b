"""Per-video temporal graphs with symmetric degree normalisation.

Frames are nodes; each frame links to every other frame within
``(window - 1) // 2`` positions. Edges carry weight 1 (``binary``) or the
cosine similarity of the two frames' features (``weighted``). Self-loops are
always added before normalising with ``D^-1/2 (A + I) D^-1/2``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigError, ShapeError

EDGE_MODES = ("binary", "weighted")
NORM_EPS = 1e-12


def _half_width(window):
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ConfigError(f"temporal window must be a positive odd integer, got {window}")
    return (int(window) - 1) // 2


def build_temporal_edges(num_frames, window):
    """Undirected frame pairs ``(i, j)``, ``i < j``, at most half a window apart."""
    if num_frames < 1:
        raise ConfigError("a graph needs at least one frame")
    half = _half_width(window)
    return {(i, j) for i in range(num_frames) for j in range(i + 1, min(num_frames, i + half + 1))}


def cosine_weight(x, y):
    """Cosine similarity clamped to ``[0, 1]``; zero when either vector is ~0."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ShapeError(f"cannot compare vectors of length {x.size} and {y.size}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx < NORM_EPS or ny < NORM_EPS:
        return 0.0
    return float(min(1.0, max(0.0, x @ y / (nx * ny))))


@dataclass(frozen=True)
class TemporalGraph:
    num_nodes: int
    window: int
    edge_mode: str
    adj: np.ndarray       # A + I
    degree: np.ndarray    # row sums of adj
    norm_adj: np.ndarray  # D^-1/2 (A + I) D^-1/2
    sparse_adj: sparse.csr_matrix = None  # banded copy of norm_adj used for products

    def propagate(self, x):
        """``norm_adj @ x`` through the banded sparse copy."""
        adj = self.sparse_adj
        if adj.dtype != x.dtype:
            adj = adj.astype(x.dtype)
        return np.asarray(adj @ x)


def _band_mask(num_frames, half):
    idx = np.arange(num_frames)
    return np.abs(idx[:, None] - idx[None, :]) <= half


def _cosine_matrix(features):
    norms = np.linalg.norm(features, axis=1)
    ok = norms >= NORM_EPS
    unit = np.zeros_like(features)
    unit[ok] = features[ok] / norms[ok, None]
    return np.clip(unit @ unit.T, 0.0, 1.0)


def build_graph(features, window=31, edge_mode="weighted"):
    """Assemble the normalised adjacency for one video's ``T x D`` features."""
    feats = np.asarray(getattr(features, "frames", features), dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ShapeError(f"graph features must be T x D with T >= 1, got {feats.shape}")
    if edge_mode not in EDGE_MODES:
        raise ConfigError(f"edge mode must be one of {EDGE_MODES}, got {edge_mode!r}")
    T = feats.shape[0]
    half = _half_width(window)
    band = _band_mask(T, half)
    if edge_mode == "binary":
        adj = band.astype(np.float64)
    else:
        adj = np.where(band, _cosine_matrix(feats), 0.0)
        # symmetrise exactly; the matmul above may differ in the last ulp
        adj = 0.5 * (adj + adj.T)
    np.fill_diagonal(adj, 1.0)
    degree = adj.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    norm_adj = inv_sqrt[:, None] * adj * inv_sqrt[None, :]
    return TemporalGraph(T, int(window), edge_mode, adj, degree, norm_adj,
                         sparse.csr_matrix(norm_adj))


def identity_graph(num_frames):
    """A graph with self-loops only; propagation through it is the identity."""
    eye = np.eye(num_frames)
    return TemporalGraph(num_frames, 1, "binary", eye, np.ones(num_frames), eye.copy(),
                         sparse.identity(num_frames, format="csr"))
