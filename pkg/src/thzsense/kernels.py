"""Hot-loop dispatch.

The compiled extension is used when it imports; otherwise the numpy
versions are.  Set ``THZSENSE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("THZSENSE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

gain_table = _impl.gain_table
pair_loss_surface = _impl.pair_loss_surface

__all__ = ["BACKEND", "gain_table", "pair_loss_surface"]
