"""Hot inner loops, compiled when possible.

The Cython extension ``_core`` is used if it was built; otherwise the
pure-Python ``_fallback`` is imported. Setting ``TSSEG_PURE_PYTHON=1`` forces
the fallback. ``BACKEND`` names the active implementation.
"""
import os

from . import _fallback

if os.environ.get("TSSEG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _fallback

BACKEND = "cython" if _impl is not _fallback else "python"

levenshtein = _impl.levenshtein
greedy_f1_counts = _impl.greedy_f1_counts
conf_hinge = _impl.conf_hinge

__all__ = ["BACKEND", "conf_hinge", "greedy_f1_counts", "levenshtein"]
