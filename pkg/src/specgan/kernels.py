"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise the numpy
fallback. Set ``SPECGAN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("SPECGAN_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _fallback

BACKEND = _impl.BACKEND
legendre_table = _impl.legendre_table
raycast = _impl.raycast
nn_sqdist = _impl.nn_sqdist
auction_assign = _impl.auction_assign

__all__ = ["BACKEND", "legendre_table", "raycast", "nn_sqdist", "auction_assign"]
