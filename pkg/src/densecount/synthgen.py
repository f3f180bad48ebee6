"""Synthetic fluorescent-microscopy image generator and pseudo-target shift.

Source-domain images are rendered as blurred elliptical Gaussian blobs on a
dim background with additive noise; centroid annotations come for free. A
configurable pixelwise shift (gamma, contrast, inversion) plus extra blur
and noise manufactures a target domain with the same annotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, PlacementError

DOMAIN_SOURCE = "source"
DOMAIN_TARGET = "target"

_PLACEMENT_TRIES_PER_CELL = 500


def _check_range(name: str, rng_pair, low_ok=None, high_ok=None) -> tuple[float, float]:
    lo, hi = rng_pair
    if lo > hi:
        raise ConfigError(f"{name} must have low <= high, got ({lo}, {hi})")
    if low_ok is not None and lo < low_ok:
        raise ConfigError(f"{name} lower bound must be >= {low_ok}, got {lo}")
    if high_ok is not None and hi > high_ok:
        raise ConfigError(f"{name} upper bound must be <= {high_ok}, got {hi}")
    return lo, hi


@dataclass(frozen=True)
class SynthConfig:
    image_height: int = 256
    image_width: int = 256
    cell_count_range: tuple[int, int] = (60, 120)
    cell_radius_range: tuple[float, float] = (3.0, 8.0)
    cell_eccentricity_range: tuple[float, float] = (0.0, 0.6)
    peak_intensity_range: tuple[float, float] = (0.5, 1.0)
    psf_sigma: float = 1.0
    noise_std: float = 0.02
    background_level: float = 0.05
    min_centroid_margin: float = 4.0
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if self.image_height < 1 or self.image_width < 1:
            raise ConfigError(f"image size must be positive, got {self.image_height}x{self.image_width}")
        lo, _ = _check_range("cell_count_range", self.cell_count_range, low_ok=0)
        _check_range("cell_radius_range", self.cell_radius_range)
        if self.cell_radius_range[0] <= 0:
            raise ConfigError(f"cell radii must be > 0, got {self.cell_radius_range}")
        _check_range("cell_eccentricity_range", self.cell_eccentricity_range, low_ok=0.0)
        if self.cell_eccentricity_range[1] >= 1.0:
            raise ConfigError(f"eccentricity must stay below 1, got {self.cell_eccentricity_range}")
        _check_range("peak_intensity_range", self.peak_intensity_range, high_ok=1.0)
        if self.peak_intensity_range[0] <= 0:
            raise ConfigError(f"peak intensity must be > 0, got {self.peak_intensity_range}")
        if self.psf_sigma < 0:
            raise ConfigError(f"psf_sigma must be >= 0, got {self.psf_sigma}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0 <= self.background_level < 1:
            raise ConfigError(f"background_level must be in [0, 1), got {self.background_level}")
        if self.min_centroid_margin < 0:
            raise ConfigError(f"min_centroid_margin must be >= 0, got {self.min_centroid_margin}")
        return self


@dataclass(frozen=True)
class ShiftConfig:
    """Pseudo-target transform; identity settings leave images bitwise unchanged."""

    gamma: float = 1.8
    intensity_invert: bool = False
    extra_blur_sigma: float = 1.0
    extra_noise_std: float = 0.03
    contrast_scale: float = 0.7
    seed: int = 0

    def validate(self) -> "ShiftConfig":
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.extra_blur_sigma < 0:
            raise ConfigError(f"extra_blur_sigma must be >= 0, got {self.extra_blur_sigma}")
        if self.extra_noise_std < 0:
            raise ConfigError(f"extra_noise_std must be >= 0, got {self.extra_noise_std}")
        if not self.contrast_scale > 0:
            raise ConfigError(f"contrast_scale must be > 0, got {self.contrast_scale}")
        return self


IDENTITY_SHIFT = ShiftConfig(
    gamma=1.0, intensity_invert=False, extra_blur_sigma=0.0, extra_noise_std=0.0, contrast_scale=1.0
)


@dataclass
class AnnotatedImage:
    """A grayscale [0,1] image with its (x, y) integer centroid annotations."""

    image: np.ndarray
    centroids: np.ndarray  # (N, 2), columns (x, y), x = column index
    domain_tag: str = DOMAIN_SOURCE

    def __post_init__(self) -> None:
        self.centroids = np.asarray(self.centroids, dtype=np.int64).reshape(-1, 2)
        if self.domain_tag not in (DOMAIN_SOURCE, DOMAIN_TARGET):
            raise ConfigError(f"domain_tag must be 'source' or 'target', got {self.domain_tag!r}")

    @property
    def count(self) -> int:
        return int(self.centroids.shape[0])


def _place_centroids(rng: np.random.Generator, cfg: SynthConfig, n_cells: int) -> np.ndarray:
    pts = np.empty((n_cells, 2), dtype=np.int64)
    margin_sq = cfg.min_centroid_margin**2
    for k in range(n_cells):
        for _ in range(_PLACEMENT_TRIES_PER_CELL):
            x = int(rng.integers(0, cfg.image_width))
            y = int(rng.integers(0, cfg.image_height))
            if margin_sq > 0 and k > 0:
                d2 = (pts[:k, 0] - x) ** 2 + (pts[:k, 1] - y) ** 2
                if d2.min() < margin_sq:
                    continue
            pts[k] = (x, y)
            break
        else:
            raise PlacementError(
                f"could not place cell {k + 1} of {n_cells} with "
                f"min_centroid_margin={cfg.min_centroid_margin} in a "
                f"{cfg.image_width}x{cfg.image_height} image"
            )
    return pts


def _render_cells(rng: np.random.Generator, cfg: SynthConfig, pts: np.ndarray) -> np.ndarray:
    canvas = np.zeros((cfg.image_height, cfg.image_width), dtype=np.float64)
    for x, y in pts:
        major = rng.uniform(*cfg.cell_radius_range)
        ecc = rng.uniform(*cfg.cell_eccentricity_range)
        angle = rng.uniform(0.0, math.pi)
        peak = rng.uniform(*cfg.peak_intensity_range)
        minor = major * math.sqrt(1.0 - ecc**2)
        # Radius reads as the ~2-sigma visible extent of the blob.
        sig_u, sig_v = major / 2.0, minor / 2.0
        half = int(math.ceil(3.0 * sig_u)) + 1
        r0, r1 = max(y - half, 0), min(y + half + 1, cfg.image_height)
        c0, c1 = max(x - half, 0), min(x + half + 1, cfg.image_width)
        yy = np.arange(r0, r1, dtype=np.float64)[:, None] - y
        xx = np.arange(c0, c1, dtype=np.float64)[None, :] - x
        ca, sa = math.cos(angle), math.sin(angle)
        u = ca * xx + sa * yy
        v = -sa * xx + ca * yy
        blob = peak * np.exp(-0.5 * ((u / sig_u) ** 2 + (v / sig_v) ** 2))
        # Max-combine so overlapping cells occlude instead of doubling brightness.
        np.maximum(canvas[r0:r1, c0:c1], blob, out=canvas[r0:r1, c0:c1])
    return canvas


def _render_one(cfg: SynthConfig, rng: np.random.Generator) -> AnnotatedImage:
    lo, hi = cfg.cell_count_range
    n_cells = int(rng.integers(lo, hi + 1))
    pts = _place_centroids(rng, cfg, n_cells)
    canvas = _render_cells(rng, cfg, pts)
    if cfg.psf_sigma > 0:
        canvas = gaussian_filter(canvas, cfg.psf_sigma)
    img = canvas + cfg.background_level
    if cfg.noise_std > 0:
        img = img + rng.normal(0.0, cfg.noise_std, size=img.shape)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return AnnotatedImage(img, pts, DOMAIN_SOURCE)


def generate_annotated(config: SynthConfig, count: int) -> list[AnnotatedImage]:
    """Render ``count`` annotated images, one derived RNG per image (seed + index)."""
    config.validate()
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    return [
        _render_one(config, np.random.default_rng(config.seed + i)) for i in range(count)
    ]


def apply_shift(img: AnnotatedImage, shift: ShiftConfig) -> AnnotatedImage:
    """Pixelwise shift, then blur and noise; centroids carry over untouched."""
    shift.validate()
    x = np.asarray(img.image, dtype=np.float64)
    if shift.gamma != 1.0:
        x = x**shift.gamma
    if shift.intensity_invert:
        x = 1.0 - x
    if shift.contrast_scale != 1.0:
        x = 0.5 + (x - 0.5) * shift.contrast_scale
    if shift.extra_blur_sigma > 0:
        x = gaussian_filter(x, shift.extra_blur_sigma)
    if shift.extra_noise_std > 0:
        rng = np.random.default_rng(shift.seed)
        x = x + rng.normal(0.0, shift.extra_noise_std, size=x.shape)
    x = np.clip(x, 0.0, 1.0)
    return AnnotatedImage(x.astype(img.image.dtype), img.centroids.copy(), DOMAIN_TARGET)


def shift_dataset(images: list[AnnotatedImage], shift: ShiftConfig) -> list[AnnotatedImage]:
    """Shift a whole set with per-image derived noise seeds (seed + index)."""
    return [apply_shift(img, replace(shift, seed=shift.seed + i)) for i, img in enumerate(images)]
