"""Kernel dispatch: the compiled extension when it imports, numpy otherwise.

Set ``FEDSIM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("FEDSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

mask_stream = _impl.mask_stream
embed_counts = _impl.embed_counts
embed_counts_batch = _impl.embed_counts_batch
