"""On-disk dataset layout and file formats.

A dataset directory holds ``manifest.txt`` (key=value lines), 16-bit
grayscale PNGs under ``images/``, per-image centroid CSVs (header ``x,y``,
x = column, origin top-left) under ``centroids/``, and optional binary
density maps under ``density/``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .densitymap import KernelConfig, build_density_map, save_dmap
from .errors import ConfigError, DataError
from .synthgen import AnnotatedImage, ShiftConfig, SynthConfig

MANIFEST_NAME = "manifest.txt"
DATASET_FORMAT = "densecount-dataset-v1"


def image_id(index: int) -> str:
    return f"img_{index:05d}"


# -- images -----------------------------------------------------------------


def save_image_png16(path: str | Path, img: np.ndarray) -> None:
    """Store a [0,1] float image as 16-bit grayscale PNG."""
    arr = np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 65535.0)
    Image.fromarray(arr.astype(np.uint16)).save(path)  # uint16 -> 16-bit grayscale



def load_image_png16(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64)
    return (arr / 65535.0).astype(np.float32)


def save_image_png8(path: str | Path, img: np.ndarray) -> None:
    """Store a [0,1] float image as 8-bit grayscale PNG (debug/report panels)."""
    arr = np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0)
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


# -- centroid CSVs ----------------------------------------------------------


def save_centroids_csv(path: str | Path, centroids: np.ndarray) -> None:
    pts = np.asarray(centroids, dtype=np.int64).reshape(-1, 2)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, y in pts:
            writer.writerow([int(x), int(y)])


def load_centroids_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x", "y"]:
        raise DataError(f"{path}: expected centroid CSV with header 'x,y'")
    pts = [(int(r[0]), int(r[1])) for r in rows[1:] if r]
    return np.asarray(pts, dtype=np.int64).reshape(-1, 2)


# -- manifest ---------------------------------------------------------------


def write_manifest(path: str | Path, entries: dict[str, object]) -> None:
    lines = [f"{key}={entries[key]}" for key in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: malformed manifest line {line!r}")
        key, value = line.split("=", 1)
        entries[key] = value
    return entries


def _flatten_config(prefix: str, cfg) -> dict[str, object]:
    out = {}
    for key, value in asdict(cfg).items():
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        out[f"{prefix}.{key}"] = value
    return out


# -- dataset directories ------------------------------------------------------


def write_dataset(
    out_dir: str | Path,
    images: list[AnnotatedImage],
    synth_cfg: SynthConfig | None = None,
    shift_cfg: ShiftConfig | None = None,
    kernel_cfg: KernelConfig | None = None,
    extra: dict[str, object] | None = None,
) -> Path:
    """Write images, centroids, optional density maps, and the manifest."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "centroids").mkdir(exist_ok=True)
    if kernel_cfg is not None:
        kernel_cfg.validate()
        (out / "density").mkdir(exist_ok=True)
    domains = {img.domain_tag for img in images} or {"source"}
    if len(domains) > 1:
        raise DataError(f"dataset mixes domains {sorted(domains)}")
    entries: dict[str, object] = {
        "format": DATASET_FORMAT,
        "count": len(images),
        "domain": domains.pop(),
    }
    if synth_cfg is not None:
        entries.update(_flatten_config("synth", synth_cfg))
    if shift_cfg is not None:
        entries.update(_flatten_config("shift", shift_cfg))
    if kernel_cfg is not None:
        entries.update(_flatten_config("kernel", kernel_cfg))
    entries.update(extra or {})
    for i, img in enumerate(images):
        name = image_id(i)
        save_image_png16(out / "images" / f"{name}.png", img.image)
        save_centroids_csv(out / "centroids" / f"{name}.csv", img.centroids)
        if kernel_cfg is not None:
            density = build_density_map(img.image.shape, img.centroids, kernel_cfg)
            save_dmap(out / "density" / f"{name}.dmap", density)
    write_manifest(out / MANIFEST_NAME, entries)
    return out


def read_dataset(dataset_dir: str | Path) -> tuple[list[AnnotatedImage], dict[str, str]]:
    """Load all images and centroid annotations; returns (images, manifest)."""
    root = Path(dataset_dir)
    manifest_path = root / MANIFEST_NAME
    if not root.is_dir() or not manifest_path.is_file():
        raise FileNotFoundError(f"{root}: not a dataset directory (missing {MANIFEST_NAME})")
    manifest = read_manifest(manifest_path)
    if manifest.get("format") != DATASET_FORMAT:
        raise DataError(f"{root}: unknown dataset format {manifest.get('format')!r}")
    count = int(manifest["count"])
    domain = manifest.get("domain", "source")
    images = []
    for i in range(count):
        name = image_id(i)
        img = load_image_png16(root / "images" / f"{name}.png")
        pts = load_centroids_csv(root / "centroids" / f"{name}.csv")
        images.append(AnnotatedImage(img, pts, domain))
    return images, manifest


def read_density_maps(dataset_dir: str | Path, count: int) -> list[np.ndarray]:
    from .densitymap import load_dmap

    root = Path(dataset_dir) / "density"
    if not root.is_dir():
        raise FileNotFoundError(f"{dataset_dir}: dataset has no density/ directory")
    return [load_dmap(root / f"{image_id(i)}.dmap") for i in range(count)]


def kernel_config_from_manifest(manifest: dict[str, str]) -> KernelConfig | None:
    if "kernel.sigma" not in manifest:
        return None
    return KernelConfig(
        sigma=float(manifest["kernel.sigma"]), half_width=int(manifest["kernel.half_width"])
    )


def check_kernel_fits(synth_cfg: SynthConfig, kernel_cfg: KernelConfig) -> None:
    """Images must be able to hold one full kernel (side 2K+1)."""
    side = 2 * kernel_cfg.half_width + 1
    if synth_cfg.image_height < side or synth_cfg.image_width < side:
        raise ConfigError(
            f"image size {synth_cfg.image_width}x{synth_cfg.image_height} is smaller than "
            f"the {side}x{side} density kernel"
        )
