"""Kernel dispatch: the compiled core when it imports, numpy otherwise.

Set ``SGNLAB_PURE_PYTHON=1`` to force the fallback (useful for benchmarking and
for checking that both paths agree).
"""

import os

from . import _fallback

try:
    if os.environ.get("SGNLAB_PURE_PYTHON"):
        raise ImportError("compiled core disabled by SGNLAB_PURE_PYTHON")
    from . import _core as _impl
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on the build
    _impl = _fallback
    BACKEND = "python"

# one exception type regardless of backend
NumericalBreakdown = (_fallback.NumericalBreakdown, _impl.NumericalBreakdown)

smw_batch_update = _impl.smw_batch_update
gram_update = _impl.gram_update
smw_rank1_sequential = _impl.smw_rank1_sequential


def backends():
    """Mapping of every importable backend name to its module."""
    out = {"python": _fallback}
    if BACKEND == "compiled":
        out["compiled"] = _impl
    return out
