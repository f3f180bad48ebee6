"""Numba-JIT kernel implementations (default backend).

Plain sequential @njit loops over contiguous runs: single writer per output
element and a fixed accumulation order, so results are deterministic and
bitwise-equal to numpy_impl. First call per dtype pays a one-off compile
(cached on disk). The patch layout is column-major per image, (C*kh*kw,
H*W), so both the gather and the scatter stream whole image rows.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col(xp, cols, kh, kw):
    c, hp, wp = xp.shape
    h = hp - kh + 1
    w = wp - kw + 1
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                k = (ci * kh + i) * kw + j
                for hi in range(h):
                    row0 = hi * w
                    for wi in range(w):
                        cols[k, row0 + wi] = xp[ci, hi + i, wi + j]
    return cols


def im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Gather one padded (C,Hp,Wp) image into patch columns (C*kh*kw, H*W)."""
    c, hp, wp = xp.shape
    h = hp - kh + 1
    w = wp - kw + 1
    cols = np.empty((c * kh * kw, h * w), dtype=xp.dtype)
    return _im2col(np.ascontiguousarray(xp), cols, kh, kw)


@njit(cache=True)
def _col2im_add(gcols, gxp, kh, kw):
    # Offset-major accumulation: each output element gathers its contributions
    # in ascending (i, j) order, matching numpy_impl's slab adds bit for bit.
    c, hp, wp = gxp.shape
    h = hp - kh + 1
    w = wp - kw + 1
    for i in range(kh):
        for j in range(kw):
            for ci in range(c):
                k = (ci * kh + i) * kw + j
                for hi in range(h):
                    row0 = hi * w
                    for wi in range(w):
                        gxp[ci, hi + i, wi + j] += gcols[k, row0 + wi]
    return gxp


def col2im_add(gcols: np.ndarray, c: int, hp: int, wp: int, kh: int, kw: int) -> np.ndarray:
    """Scatter-add patch-column gradients back onto a zeroed (C,Hp,Wp) grid."""
    gxp = np.zeros((c, hp, wp), dtype=gcols.dtype)
    return _col2im_add(np.ascontiguousarray(gcols), gxp, kh, kw)


@njit(cache=True)
def _maxpool2x2(x, y, idx):
    b, c, ho, wo = y.shape
    for bi in range(b):
        for ci in range(c):
            for hi in range(ho):
                for wi in range(wo):
                    best = x[bi, ci, 2 * hi, 2 * wi]
                    k = np.uint8(0)
                    for di in range(2):
                        for dj in range(2):
                            v = x[bi, ci, 2 * hi + di, 2 * wi + dj]
                            if v > best:
                                best = v
                                k = np.uint8(2 * di + dj)
                    y[bi, ci, hi, wi] = best
                    idx[bi, ci, hi, wi] = k


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b, c, h, w = x.shape
    y = np.empty((b, c, h // 2, w // 2), dtype=x.dtype)
    idx = np.empty((b, c, h // 2, w // 2), dtype=np.uint8)
    _maxpool2x2(np.ascontiguousarray(x), y, idx)
    return y, idx


@njit(cache=True)
def _maxpool2x2_unpool(idx, gy, gx):
    b, c, ho, wo = gy.shape
    for bi in range(b):
        for ci in range(c):
            for hi in range(ho):
                for wi in range(wo):
                    k = idx[bi, ci, hi, wi]
                    gx[bi, ci, 2 * hi + k // 2, 2 * wi + k % 2] = gy[bi, ci, hi, wi]


def maxpool2x2_unpool(idx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    b, c, ho, wo = gy.shape
    gx = np.zeros((b, c, 2 * ho, 2 * wo), dtype=gy.dtype)
    _maxpool2x2_unpool(idx, np.ascontiguousarray(gy), gx)
    return gx
