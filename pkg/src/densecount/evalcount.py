"""Counting with trained models and scoring of the comparison arms.

Counts come from integrating the (zero-clamped) estimated density map.
Arms: ``adaptation`` (target encoder + source decoder), ``source_only``
(source model as-is), ``annotated_train`` (a regressor trained on
annotated target images). Scores are MAE and SAE over absolute counting
errors; SAE is the population (divide-by-n) standard deviation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model
from .dataio import save_image_png8
from .densitymap import KernelConfig, build_density_map, integrate_count, round_count
from .errors import DataError

ARMS = ("adaptation", "source_only", "annotated_train")


@dataclass
class CountResult:
    image_id: str
    estimated_count: float
    rounded_count: int
    ground_truth: int | None = None
    absolute_error: float | None = None


@dataclass
class ArmScores:
    arm: str
    mae: float
    sae: float
    n_images: int


@dataclass
class ComparisonResult:
    scores: dict[str, ArmScores | None]
    per_image: dict[str, list[CountResult]]


def estimate_density(encoder, decoder: list[model.Conv2d], img: np.ndarray) -> np.ndarray:
    """Model density estimate with negatives clamped to zero."""
    est = model.decode(decoder, model.encode(encoder, img))
    return np.maximum(est, 0.0)


def count_image(
    encoder,
    decoder: list[model.Conv2d],
    img: np.ndarray,
    image_id: str = "",
    ground_truth: int | None = None,
) -> CountResult:
    """Count cells in one image by integrating the clamped density estimate."""
    estimated = integrate_count(estimate_density(encoder, decoder, img))
    error = abs(estimated - ground_truth) if ground_truth is not None else None
    return CountResult(image_id, estimated, round_count(estimated), ground_truth, error)


def score_arm(results: list[CountResult], arm: str = "") -> ArmScores:
    """MAE and population-SAE over results that carry ground truth."""
    errors = np.asarray(
        [r.absolute_error for r in results if r.absolute_error is not None], dtype=np.float64
    )
    if errors.size == 0:
        raise DataError("scoring needs at least one result with ground truth")
    return ArmScores(arm, float(errors.mean()), float(errors.std(ddof=0)), int(errors.size))


def _arm_models(source_drm, dam, annotated_drm) -> dict[str, tuple | None]:
    return {
        "adaptation": (dam, source_drm.decoder) if dam is not None and source_drm is not None else None,
        "source_only": (source_drm.encoder, source_drm.decoder) if source_drm is not None else None,
        "annotated_train": (annotated_drm.encoder, annotated_drm.decoder)
        if annotated_drm is not None
        else None,
    }


def run_comparison(
    source_drm: model.DrmParams | None,
    dam: model.DamParams | None,
    annotated_train_drm: model.DrmParams | None,
    eval_set,
    kernel_cfg: KernelConfig | None = None,
    out_dir: str | Path | None = None,
) -> ComparisonResult:
    """Count the eval set under every available arm and score each one.

    ``eval_set`` is a sequence of AnnotatedImage; ground truth is the
    centroid count. Missing models leave their arm marked absent. With
    ``out_dir`` set, writes per-arm count CSVs, a summary CSV, and one
    side-by-side panel PNG (image, true density, per-arm estimates) per
    evaluated image.
    """
    eval_set = list(eval_set)
    if not eval_set:
        raise DataError("evaluation set is empty")
    arms = _arm_models(source_drm, dam, annotated_train_drm)
    kernel_cfg = kernel_cfg or KernelConfig()

    per_image: dict[str, list[CountResult]] = {}
    densities: dict[str, list[np.ndarray]] = {}
    for arm, heads in arms.items():
        if heads is None:
            continue
        encoder, decoder = heads
        results, maps = [], []
        for i, item in enumerate(eval_set):
            est = estimate_density(encoder, decoder, item.image)
            estimated = integrate_count(est)
            truth = item.count
            results.append(
                CountResult(f"img_{i:05d}", estimated, round_count(estimated), truth, abs(estimated - truth))
            )
            maps.append(est)
        per_image[arm] = results
        densities[arm] = maps

    scores: dict[str, ArmScores | None] = {
        arm: score_arm(per_image[arm], arm) if arm in per_image else None for arm in ARMS
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for arm, results in per_image.items():
            write_counts_csv(out / f"counts_{arm}.csv", results)
        write_summary_csv(out / "summary.csv", scores)
        present = [arm for arm in ARMS if arm in densities]
        for i, item in enumerate(eval_set):
            truth_map = build_density_map(item.image.shape, item.centroids, kernel_cfg)
            panels = [item.image, truth_map] + [densities[arm][i] for arm in present]
            _write_panel_png(out / f"panels_img_{i:05d}.png", panels)

    return ComparisonResult(scores, per_image)


def write_counts_csv(path: str | Path, results: list[CountResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "estimated", "rounded", "truth", "abs_error"])
        for r in results:
            writer.writerow(
                [
                    r.image_id,
                    repr(r.estimated_count),
                    r.rounded_count,
                    "" if r.ground_truth is None else r.ground_truth,
                    "" if r.absolute_error is None else repr(r.absolute_error),
                ]
            )


def write_summary_csv(path: str | Path, scores: dict[str, ArmScores | None]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# sae is the population (divide-by-n) standard deviation of absolute errors\n")
        writer = csv.writer(fh)
        writer.writerow(["arm", "mae", "sae", "n_images", "status"])
        for arm in ARMS:
            s = scores.get(arm)
            if s is None:
                writer.writerow([arm, "", "", 0, "absent"])
            else:
                writer.writerow([arm, repr(s.mae), repr(s.sae), s.n_images, "present"])


def format_summary_table(scores: dict[str, ArmScores | None]) -> str:
    lines = [f"{'arm':<16} {'mae':>10} {'sae':>10} {'n':>4}"]
    for arm in ARMS:
        s = scores.get(arm)
        if s is None:
            lines.append(f"{arm:<16} {'absent':>10} {'-':>10} {'-':>4}")
        else:
            lines.append(f"{arm:<16} {s.mae:>10.3f} {s.sae:>10.3f} {s.n_images:>4}")
    return "\n".join(lines)


def _write_panel_png(path: Path, panels: list[np.ndarray], gap: int = 2) -> None:
    """Horizontally concatenated panels: raw image first, densities on a shared scale."""
    height = panels[0].shape[0]
    vmax = max(float(p.max()) for p in panels[1:]) if len(panels) > 1 else 1.0
    vmax = max(vmax, 1e-9)
    shown = [np.asarray(panels[0], dtype=np.float64)]
    shown += [np.asarray(p, dtype=np.float64) / vmax for p in panels[1:]]
    sep = np.ones((height, gap), dtype=np.float64)
    row: list[np.ndarray] = []
    for i, p in enumerate(shown):
        if i:
            row.append(sep)
        row.append(p)
    save_image_png8(path, np.concatenate(row, axis=1))
