"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

Set FACTQA_KERNELS=numpy to force the fallback (used by the benchmark and by
tests that pin a backend).
"""

import os

from factqa._kernels import _ref

try:
    from factqa._kernels import _core
except ImportError:
    _core = None

_FORCED = os.environ.get("FACTQA_KERNELS", "").lower()
_impl = _ref if (_core is None or _FORCED == "numpy") else _core

BACKEND = "numpy" if _impl is _ref else "compiled"

scatter_add_rows = _impl.scatter_add_rows
accumulate_postings = _impl.accumulate_postings

__all__ = ["BACKEND", "accumulate_postings", "scatter_add_rows"]
