"""Ground-truth density maps from centroid annotations, and counting by
integration.

A density map is the superposition of one normalized discrete Gaussian
kernel per cell centroid, so summing the whole map recovers the cell
count. Kernels clipped at image borders are renormalized so every cell
still contributes exactly one count (a flag exposes the raw-clipping
variant for comparison).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AnnotationError, ConfigError

DMAP_MAGIC = b"DMAP"


@dataclass(frozen=True)
class KernelConfig:
    """Isotropic Gaussian rasterization kernel: std dev in pixels and integer half-width."""

    sigma: float = 3.0
    half_width: int = 10

    def validate(self) -> "KernelConfig":
        if not self.sigma > 0:
            raise ConfigError(f"kernel sigma must be > 0, got {self.sigma}")
        if int(self.half_width) != self.half_width or self.half_width < 1:
            raise ConfigError(f"kernel half_width must be a positive integer, got {self.half_width}")
        return self


def make_kernel(cfg: KernelConfig) -> np.ndarray:
    """Normalized (2K+1)x(2K+1) Gaussian grid; entries sum to exactly 1."""
    cfg.validate()
    k = int(cfg.half_width)
    offsets = np.arange(-k, k + 1, dtype=np.float64)
    gauss = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2.0 * cfg.sigma**2))
    return gauss / gauss.sum()


def build_density_map(
    shape: tuple[int, int],
    centroids: np.ndarray,
    cfg: KernelConfig,
    renormalize_border: bool = True,
) -> np.ndarray:
    """Superimpose one kernel per centroid onto an (M,N) float64 grid.

    Centroids are integer (x, y) = (column, row) pairs. With
    ``renormalize_border`` each border-clipped kernel is rescaled so its
    in-bounds mass is 1; without it, border cells contribute less than 1.
    """
    height, width = int(shape[0]), int(shape[1])
    out = np.zeros((height, width), dtype=np.float64)
    pts = np.asarray(centroids, dtype=np.int64).reshape(-1, 2)
    if pts.shape[0] == 0:
        return out
    kern = make_kernel(cfg)
    k = int(cfg.half_width)
    for i, (x, y) in enumerate(pts):
        if not (0 <= x < width and 0 <= y < height):
            raise AnnotationError(
                f"centroid {i} at (x={x}, y={y}) lies outside the {width}x{height} image"
            )
        r0, c0 = y - k, x - k
        rr0, rr1 = max(r0, 0), min(y + k + 1, height)
        cc0, cc1 = max(c0, 0), min(x + k + 1, width)
        piece = kern[rr0 - r0 : rr1 - r0, cc0 - c0 : cc1 - c0]
        if renormalize_border and piece.shape != kern.shape:
            piece = piece / piece.sum()
        out[rr0:rr1, cc0:cc1] += piece
    return out


def integrate_count(density: np.ndarray) -> float:
    """Sum the map in float64; the result approximates the cell count."""
    return float(np.sum(np.asarray(density), dtype=np.float64))


def round_count(value: float) -> int:
    """Integer report of a real count: round half away from zero."""
    if value >= 0:
        return int(math.floor(value + 0.5))
    return int(math.ceil(value - 0.5))


def save_dmap(path: str | Path, density: np.ndarray) -> None:
    """Write the binary density-map format: magic, u32 rows, u32 cols, float32 row-major."""
    arr = np.ascontiguousarray(np.asarray(density), dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"density map must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(DMAP_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def load_dmap(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DMAP_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {DMAP_MAGIC!r}")
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated density map")
    return data.reshape(rows, cols).copy()
