"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; set ``LIFTFUSE_BACKEND=python``
to force the fallback. Both backends return bit-identical results.
"""

import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("LIFTFUSE_BACKEND", "").lower() != "python":
    _active = compiled_backend
else:
    _active = python_backend

BACKEND = _active.BACKEND
neighbor_table = _active.neighbor_table
gather_rows = _active.gather_rows
scatter_rows = _active.scatter_rows
segment_max = _active.segment_max
zbuffer = _active.zbuffer

__all__ = [
    "BACKEND",
    "compiled_backend",
    "python_backend",
    "neighbor_table",
    "gather_rows",
    "scatter_rows",
    "segment_max",
    "zbuffer",
]
