"""Counting identities, MAE/SAE scoring oracle, comparison-arm handling."""

import csv

import numpy as np
import pytest

from conftest import TINY_DEC, TINY_ENC
from densecount import model
from densecount.densitymap import KernelConfig, build_density_map, integrate_count
from densecount.errors import DataError
from densecount.evalcount import (
    ARMS,
    CountResult,
    count_image,
    run_comparison,
    score_arm,
)
from densecount.synthgen import SynthConfig, generate_annotated


def tiny_drm(seed=0, dtype=np.float32):
    return model.init_drm(seed, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC, dtype=dtype)


def eval_images(n=3, seed=12):
    cfg = SynthConfig(
        image_height=16,
        image_width=16,
        cell_count_range=(2, 5),
        cell_radius_range=(1.5, 2.5),
        min_centroid_margin=2.0,
        seed=seed,
    )
    return generate_annotated(cfg, n)


def test_zero_parameter_models_count_zero():
    params = tiny_drm()
    for _, arr in params.named_arrays():
        arr[:] = 0
    img = np.random.default_rng(0).random((16, 16)).astype(np.float32)
    result = count_image(params.encoder, params.decoder, img, image_id="z")
    assert result.estimated_count == 0.0
    assert result.rounded_count == 0


def test_counts_are_clamped_nonnegative():
    params = tiny_drm()
    for _, arr in params.named_arrays():
        arr[:] = 0
    params.decoder[-1].bias[:] = -5.0  # raw output negative everywhere
    img = np.zeros((16, 16), dtype=np.float32)
    result = count_image(params.encoder, params.decoder, img)
    assert result.estimated_count == 0.0


def test_ground_truth_density_bypass_recovers_count():
    img = eval_images(1)[0]
    density = build_density_map(img.image.shape, img.centroids, KernelConfig(2.0, 5))
    assert abs(integrate_count(density) - img.count) < 1e-6


def test_count_image_records_error_against_truth():
    params = tiny_drm()
    img = eval_images(1)[0]
    result = count_image(params.encoder, params.decoder, img.image, image_id="a", ground_truth=4)
    assert result.ground_truth == 4
    assert result.absolute_error == abs(result.estimated_count - 4)


def test_score_arm_constant_errors():
    results = [CountResult(str(i), 0.0, 0, 0, 3.0) for i in range(3)]
    scores = score_arm(results, "source_only")
    assert scores.mae == 3.0 and scores.sae == 0.0 and scores.n_images == 3


def test_score_arm_population_std():
    results = [CountResult("a", 0.0, 0, 0, 0.0), CountResult("b", 0.0, 0, 0, 10.0)]
    scores = score_arm(results)
    assert scores.mae == 5.0 and scores.sae == 5.0


def test_score_arm_requires_ground_truth():
    with pytest.raises(DataError):
        score_arm([CountResult("a", 1.0, 1)])


def test_mae_sae_match_brute_force_two_pass_oracle():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        errors = rng.random(n) * rng.integers(1, 100)
        results = [CountResult(str(i), 0.0, 0, 0, float(e)) for i, e in enumerate(errors)]
        scores = score_arm(results)
        mean = sum(float(e) for e in errors) / n
        var = sum((float(e) - mean) ** 2 for e in errors) / n
        assert abs(scores.mae - mean) <= 1e-12
        assert abs(scores.sae - var**0.5) <= 1e-12


def test_run_comparison_reports_all_three_arms():
    source = tiny_drm(0)
    dam = model.init_dam(source.encoder)
    annotated = tiny_drm(1)
    comparison = run_comparison(source, dam, annotated, eval_images(), kernel_cfg=KernelConfig(2.0, 5))
    assert set(comparison.scores) == set(ARMS)
    assert all(comparison.scores[arm] is not None for arm in ARMS)
    assert all(len(v) == 3 for v in comparison.per_image.values())


def test_missing_arm_marked_absent_others_reported():
    source = tiny_drm(0)
    comparison = run_comparison(source, None, None, eval_images(), kernel_cfg=KernelConfig(2.0, 5))
    assert comparison.scores["source_only"] is not None
    assert comparison.scores["adaptation"] is None
    assert comparison.scores["annotated_train"] is None


def test_adaptation_arm_shares_decoder_with_source_only():
    source = tiny_drm(0)
    dam = model.init_dam(source.encoder)
    dam.encoder[0].weight += 0.05
    imgs = eval_images()
    comparison = run_comparison(source, dam, None, imgs, kernel_cfg=KernelConfig(2.0, 5))
    # Same decoder bits, different encoder: identical clamp-and-integrate path.
    src_est = comparison.per_image["source_only"][0].estimated_count
    ada_est = comparison.per_image["adaptation"][0].estimated_count
    assert src_est != ada_est
    direct = count_image(dam, source.decoder, imgs[0].image)
    assert direct.estimated_count == ada_est


def test_run_comparison_writes_reports(tmp_path):
    source = tiny_drm(0)
    dam = model.init_dam(source.encoder)
    out = tmp_path / "report"
    run_comparison(source, dam, None, eval_images(), kernel_cfg=KernelConfig(2.0, 5), out_dir=out)
    assert (out / "counts_source_only.csv").is_file()
    assert (out / "counts_adaptation.csv").is_file()
    assert not (out / "counts_annotated_train.csv").exists()
    with open(out / "counts_source_only.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["id", "estimated", "rounded", "truth", "abs_error"]
    assert len(rows) == 4
    summary = (out / "summary.csv").read_text()
    assert summary.startswith("# sae is the population")
    assert "annotated_train,,,0,absent" in summary
    for i in range(3):
        assert (out / f"panels_img_{i:05d}.png").is_file()


def test_run_comparison_rejects_empty_eval_set():
    with pytest.raises(DataError):
        run_comparison(tiny_drm(), None, None, [])
