"""Kernel normalization, count-by-integration identities, and the DMAP format."""

import numpy as np
import pytest

from densecount.densitymap import (
    KernelConfig,
    build_density_map,
    integrate_count,
    load_dmap,
    make_kernel,
    round_count,
    save_dmap,
)
from densecount.errors import AnnotationError, ConfigError


@pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0, 10.0])
@pytest.mark.parametrize("half_width", [3, 10, 25])
def test_kernel_sums_to_one(sigma, half_width):
    kern = make_kernel(KernelConfig(sigma, half_width))
    assert kern.shape == (2 * half_width + 1, 2 * half_width + 1)
    assert abs(kern.sum() - 1.0) < 1e-12


def test_kernel_entries_match_direct_formula():
    cfg = KernelConfig(sigma=3.0, half_width=10)
    kern = make_kernel(cfg)
    # Independent scalar evaluation of C * exp(-(nx^2+ny^2)/(2 sigma^2)).
    raw = np.empty_like(kern)
    for ix, nx in enumerate(range(-10, 11)):
        for iy, ny in enumerate(range(-10, 11)):
            raw[ix, iy] = np.exp(-(nx**2 + ny**2) / (2 * 3.0**2))
    expect = raw / raw.sum()
    assert np.allclose(kern, expect, rtol=1e-14, atol=0)


def test_kernel_center_is_maximum_and_symmetric():
    for cfg in (KernelConfig(3.0, 10), KernelConfig(0.7, 4)):
        kern = make_kernel(cfg)
        k = cfg.half_width
        assert kern[k, k] == kern.max()
        assert kern[k + 1, k] == kern[k, k + 1] == kern[k - 1, k]
        assert np.allclose(kern, kern[::-1, :], atol=0)
        assert np.allclose(kern, kern.T, atol=0)


def test_kernel_config_validation():
    with pytest.raises(ConfigError):
        make_kernel(KernelConfig(sigma=0.0))
    with pytest.raises(ConfigError):
        make_kernel(KernelConfig(half_width=0))


def test_empty_centroids_give_zero_map():
    out = build_density_map((32, 32), np.empty((0, 2)), KernelConfig(3.0, 10))
    assert out.shape == (32, 32)
    assert integrate_count(out) == 0.0


def test_interior_centroid_integrates_to_one():
    out = build_density_map((256, 256), [(128, 128)], KernelConfig(3.0, 10))
    assert abs(integrate_count(out) - 1.0) < 1e-9


def test_corner_centroid_renormalized_against_quadrant_mass_oracle():
    cfg = KernelConfig(3.0, 10)
    kern = make_kernel(cfg)
    out = build_density_map((64, 64), [(0, 0)], cfg)
    assert abs(integrate_count(out) - 1.0) < 1e-9
    # Brute-force partial mass of the in-bounds quadrant gives the rescale factor.
    quadrant_mass = 0.0
    for nx in range(0, 11):
        for ny in range(0, 11):
            quadrant_mass += kern[10 + nx, 10 + ny]
    expect_peak = kern[10, 10] / quadrant_mass
    assert abs(out[0, 0] - expect_peak) < 1e-12

    raw = build_density_map((64, 64), [(0, 0)], cfg, renormalize_border=False)
    assert abs(integrate_count(raw) - quadrant_mass) < 1e-12


def test_border_cells_undercount_without_renormalization():
    cfg = KernelConfig(3.0, 10)
    raw = build_density_map((64, 64), [(0, 32)], cfg, renormalize_border=False)
    assert integrate_count(raw) < 1.0 - 1e-3


def test_out_of_bounds_centroid_names_offending_index():
    with pytest.raises(AnnotationError, match="centroid 1"):
        build_density_map((32, 32), [(5, 5), (32, 0)], KernelConfig(3.0, 10))


def test_interior_count_consistency_without_renormalization():
    rng = np.random.default_rng(11)
    cfg = KernelConfig(3.0, 10)
    pts = np.stack(
        [rng.integers(10, 118, size=40), rng.integers(10, 118, size=40)], axis=1
    )
    out = build_density_map((128, 128), pts, cfg, renormalize_border=False)
    assert abs(integrate_count(out) - 40.0) < 1e-9 * 40


def test_linearity_over_disjoint_centroid_sets():
    rng = np.random.default_rng(12)
    cfg = KernelConfig(2.0, 7)
    pts = rng.permutation(np.stack(np.meshgrid(range(0, 64, 7), range(0, 64, 7)), -1).reshape(-1, 2))[:20]
    a, b = pts[:12], pts[12:]
    combined = build_density_map((64, 64), pts, cfg)
    split = build_density_map((64, 64), a, cfg) + build_density_map((64, 64), b, cfg)
    assert np.allclose(combined, split, rtol=0, atol=1e-15)


def test_translation_equivariance_for_interior_centroid():
    cfg = KernelConfig(2.0, 7)
    base = build_density_map((64, 64), [(20, 30)], cfg)
    moved = build_density_map((64, 64), [(23, 25)], cfg)
    assert np.allclose(np.roll(np.roll(base, -5, axis=0), 3, axis=1), moved, atol=1e-15)


def test_integrate_count_cases():
    assert integrate_count(np.zeros((16, 16))) == 0.0
    uniform = np.full((32, 48), 1.0 / (32 * 48))
    assert abs(integrate_count(uniform) - 1.0) < 1e-12


def test_count_of_97_synthetic_annotations():
    from densecount.synthgen import SynthConfig, generate_annotated

    cfg = SynthConfig(
        image_height=128,
        image_width=128,
        cell_count_range=(97, 97),
        cell_radius_range=(2.0, 3.0),
        min_centroid_margin=2.0,
        seed=5,
    )
    img = generate_annotated(cfg, 1)[0]
    assert img.count == 97
    density = build_density_map(img.image.shape, img.centroids, KernelConfig(3.0, 10))
    assert abs(integrate_count(density) - 97.0) < 1e-6


def test_round_count_half_away_from_zero():
    assert round_count(0.0) == 0
    assert round_count(0.5) == 1
    assert round_count(1.49) == 1
    assert round_count(2.5) == 3
    assert round_count(-0.5) == -1
    assert round_count(-1.2) == -1


def test_dmap_roundtrip_and_layout(tmp_path):
    rng = np.random.default_rng(13)
    density = rng.random((5, 7)).astype(np.float32)
    path = tmp_path / "map.dmap"
    save_dmap(path, density)
    raw = path.read_bytes()
    assert raw[:4] == b"DMAP"
    assert int.from_bytes(raw[4:8], "little") == 5
    assert int.from_bytes(raw[8:12], "little") == 7
    assert len(raw) == 12 + 5 * 7 * 4
    back = load_dmap(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, density)


def test_dmap_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.dmap"
    path.write_bytes(b"JUNK" + b"\0" * 20)
    with pytest.raises(ValueError, match="magic"):
        load_dmap(path)
