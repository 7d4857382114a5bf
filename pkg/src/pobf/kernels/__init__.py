"""Hot raster/box kernels with a compiled core and a numpy fallback.

The backend is chosen once at import time:

* ``POBF_KERNELS=native``  require the compiled extension (ImportError if absent)
* ``POBF_KERNELS=python``  force the numpy fallback
* unset / ``auto``         prefer the compiled extension, fall back silently

Both backends are bit-for-bit equivalent; ``tests/test_kernels.py`` enforces
that, and ``benchmarks/bench_kernels.py`` compares their speed.
"""

import importlib
import os

_CHOICES = ("auto", "native", "python")


def load_backend(name: str = "auto"):
    """Return the kernel module for ``name`` ("auto", "native" or "python")."""
    if name not in _CHOICES:
        raise ValueError(f"unknown kernel backend {name!r}, expected one of {_CHOICES}")
    if name == "python":
        return importlib.import_module("pobf.kernels._fallback")
    try:
        return importlib.import_module("pobf.kernels._native")
    except ImportError:
        if name == "native":
            raise
        return importlib.import_module("pobf.kernels._fallback")


_impl = load_backend(os.environ.get("POBF_KERNELS", "auto").strip().lower() or "auto")

BACKEND = _impl.BACKEND
iou_cwh = _impl.iou_cwh
iou_pairs = _impl.iou_pairs
fill_outside = _impl.fill_outside
zero_rect = _impl.zero_rect
restore_where_keep = _impl.restore_where_keep

__all__ = [
    "BACKEND",
    "load_backend",
    "iou_cwh",
    "iou_pairs",
    "fill_outside",
    "zero_rect",
    "restore_where_keep",
]
