"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The numba implementation JIT-compiles the im2col/col2im gathers and the
pooling loops; matrix products always go through BLAS so both backends
produce bitwise-identical results. Select the backend with the
``DENSECOUNT_BACKEND`` environment variable (``numba`` or ``numpy``);
unset means numba when importable. ``benchmarks/bench_kernels.py``
compares the two.
"""

from __future__ import annotations

import os
import warnings

from . import numpy_impl

_BACKENDS = {"numpy": numpy_impl}

try:
    from . import numba_impl

    _BACKENDS["numba"] = numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

_active_name = ""
_active = numpy_impl


def set_backend(name: str) -> str:
    """Select the kernel backend ('numba', 'numpy', or 'auto'). Returns the active name."""
    global _active_name, _active
    if name == "auto" or name == "":
        name = "numba" if "numba" in _BACKENDS else "numpy"
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}; expected 'numba', 'numpy', or 'auto'")
    if name == "numba" and "numba" not in _BACKENDS:
        warnings.warn("numba unavailable; falling back to the numpy kernel backend")
        name = "numpy"
    _active_name = name
    _active = _BACKENDS[name]
    return _active_name


def get_backend() -> str:
    return _active_name


set_backend(os.environ.get("DENSECOUNT_BACKEND", "auto"))


def im2col(xp, kh: int, kw: int):
    """Gather one padded (C,Hp,Wp) image into patch columns (C*kh*kw, H*W)."""
    return _active.im2col(xp, kh, kw)


def col2im_add(gcols, c: int, hp: int, wp: int, kh: int, kw: int):
    """Scatter-add patch-column gradients back onto a zeroed (C,Hp,Wp) grid."""
    return _active.col2im_add(gcols, c, hp, wp, kh, kw)


def maxpool2x2(x):
    """2x2/stride-2 max pool. Returns (pooled, argmax index in 0..3 per output)."""
    return _active.maxpool2x2(x)


def maxpool2x2_unpool(idx, gy):
    """Route output gradients back to the argmax positions of a 2x2 pool."""
    return _active.maxpool2x2_unpool(idx, gy)
