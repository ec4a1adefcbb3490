"""Hot-kernel backend selection.

The compiled Cython extension is preferred; the NumPy fallback is used
when the extension is missing or when the environment variable
STGRID_PURE=1 is set. Both backends implement the same functions with
identical numerics.
"""

import os

from stgrid.kernels import _pure

if os.environ.get("STGRID_PURE", "0") == "1":
    backend = _pure
else:
    try:
        from stgrid.kernels import _core as backend  # type: ignore[no-redef]
    except ImportError:
        backend = _pure

BACKEND_NAME = backend.NAME

cross_correlate = backend.cross_correlate
normalize_channels = backend.normalize_channels
rollout_costs = backend.rollout_costs

__all__ = ["BACKEND_NAME", "backend", "cross_correlate", "normalize_channels", "rollout_costs"]
