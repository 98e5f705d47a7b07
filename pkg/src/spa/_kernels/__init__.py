"""Kernel backend selection.

The environment variable SPA_BACKEND picks the implementation:

  auto  (default) numba when importable, else numpy
  numba           require the JIT kernels, fail if numba is missing
  numpy           force the pure-numpy fallback

Both backends implement the same contracts; see numpy_impl for the
reference semantics.
"""

import os

from . import numpy_impl

_choice = os.environ.get("SPA_BACKEND", "auto").strip().lower() or "auto"

if _choice == "numpy":
    _impl = numpy_impl
elif _choice == "numba":
    from . import numba_impl as _impl
elif _choice == "auto":
    try:
        from . import numba_impl as _impl
    except ImportError:
        _impl = numpy_impl
else:
    raise ValueError(
        f"SPA_BACKEND must be 'auto', 'numba' or 'numpy', got {_choice!r}"
    )

ACTIVE_BACKEND = _impl.BACKEND_NAME

knn = _impl.knn
farthest_point_indices = _impl.farthest_point_indices
octant_pool_batch = _impl.octant_pool_batch
