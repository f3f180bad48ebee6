"""Pure-numpy kernel implementations (fallback backend).

Element ordering must match numba_impl exactly: patch rows are indexed by
(c, i, j) row-major, patch columns by (h, w) row-major, and pooling ties
resolve to the first maximum in row-major 2x2 order. col2im accumulates
offset-major, the same per-element order as the numba scatter.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Gather one padded (C,Hp,Wp) image into patch columns (C*kh*kw, H*W)."""
    c, hp, wp = xp.shape
    h = hp - kh + 1
    w = wp - kw + 1
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (C,H,W,kh,kw)
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, h * w)
    return np.ascontiguousarray(cols)


def col2im_add(gcols: np.ndarray, c: int, hp: int, wp: int, kh: int, kw: int) -> np.ndarray:
    """Scatter-add patch-column gradients back onto a zeroed (C,Hp,Wp) grid."""
    h = hp - kh + 1
    w = wp - kw + 1
    g = gcols.reshape(c, kh, kw, h, w)
    gxp = np.zeros((c, hp, wp), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i : i + h, j : j + w] += g[:, i, j]
    return gxp


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    xr = x.reshape(b, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, 4)
    idx = xr.argmax(axis=4).astype(np.uint8)
    y = np.take_along_axis(xr, idx[..., None].astype(np.intp), axis=4)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2x2_unpool(idx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    b, c, ho, wo = gy.shape
    out4 = np.zeros((b, c, ho, wo, 4), dtype=gy.dtype)
    np.put_along_axis(out4, idx[..., None].astype(np.intp), gy[..., None], axis=4)
    gx = out4.reshape(b, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * ho, 2 * wo)
    return np.ascontiguousarray(gx)
