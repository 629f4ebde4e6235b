"""Dense kernels, activations, ADAM, and a finite-difference gradient checker.

Matrices are plain 2-D :class:`numpy.ndarray` objects. Precision is chosen per
model through a ``precision`` setting (64 for tests and checkpoints, 32 for
faster training); nothing here holds global state.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "AdamState",
    "adam_step",
    "as_matrix",
    "dtype_for",
    "finite_diff_grad",
    "log_softmax",
    "matmul",
    "relu",
    "row_softmax",
]


def dtype_for(precision):
    """Map a precision setting (32 or 64) to a numpy dtype."""
    if precision in (64, "64", "float64", np.float64):
        return np.float64
    if precision in (32, "32", "float32", np.float32):
        return np.float32
    raise ConfigError(f"precision must be 32 or 64, got {precision!r}")


def as_matrix(x, dtype=np.float64):
    a = np.asarray(x, dtype=dtype)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def relu(x):
    return np.maximum(x, 0)


def row_softmax(logits):
    """Softmax over the last axis, stabilised by subtracting the row max."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    """``logit - logsumexp(row)``; never computed as ``log(softmax)``."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for one parameter matrix.

    Weight decay is classic L2: ``weight_decay * param`` is added to the
    gradient before the moments are updated.
    """

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def zeros_like(cls, param, **hyper):
        return cls(m=np.zeros_like(param), v=np.zeros_like(param), **hyper)

    def copy(self):
        return AdamState(self.m.copy(), self.v.copy(), self.step_count, self.lr,
                         self.beta1, self.beta2, self.eps_hat, self.weight_decay)


def adam_step(param, grad, state):
    """Apply one bias-corrected ADAM update to ``param`` in place.

    Returns ``(param, state)`` for convenience; both are mutated.
    """
    if param.shape != grad.shape:
        raise ShapeError(f"parameter shape {param.shape} does not match gradient {grad.shape}")
    if state.m.shape != param.shape:
        raise ShapeError(f"ADAM state shape {state.m.shape} does not match parameter {param.shape}")
    g = grad
    if state.weight_decay:
        g = g + state.weight_decay * param
    state.step_count += 1
    t = state.step_count
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    param -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)).astype(param.dtype, copy=False)
    return param, state


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of the scalar function ``f`` at ``x``.

    ``x`` is not modified; each entry is perturbed on a private copy.
    """
    if h <= 0:
        raise ConfigError("finite-difference step must be positive")
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad

