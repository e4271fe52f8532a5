"""Hot-loop kernels with a compiled fast path and a pure-Python fallback.

The compiled extension is optional; import falls back to the reference
implementation when it is missing or when OODKIT_PURE_PYTHON is set.
Both implementations are exact drop-ins for each other.
"""

from __future__ import annotations

import os

from . import _py

if os.environ.get("OODKIT_PURE_PYTHON"):
    _impl = _py
    HAVE_FAST = False
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]

        HAVE_FAST = True
    except ImportError:
        _impl = _py
        HAVE_FAST = False

IMPL_NAME = "compiled" if HAVE_FAST else "python"

forest_gather = _impl.forest_gather
iforest_paths = _impl.iforest_paths

__all__ = ["HAVE_FAST", "IMPL_NAME", "forest_gather", "iforest_paths"]
