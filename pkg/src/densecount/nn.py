"""Batched NCHW layer primitives with explicit backward passes.

Convolutions are stride-1 with same padding (odd kernels only); spatial
resizing is done by dedicated pool/upsample layers. Forward passes cache
nothing hidden: backward functions take exactly the arrays they need, so
callers control memory. All matrix products run through BLAS; gathers and
pools dispatch to the selected kernel backend.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 convolution of (B,C,H,W) with (O,C,kh,kw) + bias."""
    bs, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv weight expects {ci} input channels, got {c}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    w2 = np.ascontiguousarray(w.reshape(o, -1))
    out = np.empty((bs, o, h, wd), dtype=x.dtype)
    for bi in range(bs):
        cols = kernels.im2col(xp[bi], kh, kw)
        np.matmul(w2, cols, out=out[bi].reshape(o, h * wd))
    out += b[None, :, None, None]
    return out


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, gy: np.ndarray, need_gx: bool = True
) -> tuple[np.ndarray | None, np.ndarray, np.ndarray]:
    """Gradients of conv2d w.r.t. input, weight, and bias."""
    bs, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    w2 = np.ascontiguousarray(w.reshape(o, -1))
    gb = gy.sum(axis=(0, 2, 3))
    gw2 = np.zeros_like(w2)
    gx = np.empty_like(x) if need_gx else None
    for bi in range(bs):
        gy2 = gy[bi].reshape(o, h * wd)
        cols = kernels.im2col(xp[bi], kh, kw)
        gw2 += gy2 @ cols.T
        if need_gx:
            gcols = w2.T @ gy2
            gxp = kernels.col2im_add(gcols, c, h + 2 * ph, wd + 2 * pw, kh, kw)
            gx[bi] = gxp[:, ph : ph + h, pw : pw + wd] if ph or pw else gxp
    return gx, gw2.reshape(w.shape), gb


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return gy * (y > 0)


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pool; also returns argmax indices for the backward pass."""
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {x.shape[2]}x{x.shape[3]}")
    return kernels.maxpool2x2(x)


def maxpool2_backward(idx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return kernels.maxpool2x2_unpool(idx, gy)


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour x2 upsampling."""
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(gy: np.ndarray) -> np.ndarray:
    bs, c, h, w = gy.shape
    return gy.reshape(bs, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def global_avgpool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(2, 3))


def global_avgpool_backward(g: np.ndarray, h: int, w: int) -> np.ndarray:
    gx = np.broadcast_to((g / (h * w))[:, :, None, None], (*g.shape, h, w))
    return np.ascontiguousarray(gx)


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine layer: (B,in) @ (out,in)^T + (out,)."""
    return x @ w.T + b


def dense_backward(
    x: np.ndarray, w: np.ndarray, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return gy @ w, gy.T @ x, gy.sum(axis=0)


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout; returns (output, keep mask)."""
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(mask: np.ndarray, rate: float, gy: np.ndarray) -> np.ndarray:
    return gy * mask / (1.0 - rate)


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    """He fan-in uniform init, the standard choice for ReLU stacks."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
