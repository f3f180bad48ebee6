"""Adversarial mechanics: losses, clipping, isolation, init contract, stability."""

import numpy as np
import pytest

from conftest import TINY_DEC, TINY_ENC, params_equal
from densecount import model
from densecount.adaptation import (
    AdaptConfig,
    _critic_update,
    _dam_update,
    critic_losses,
    train_dam,
)
from densecount.errors import ConfigError, DataError, ShapeError
from densecount.synthgen import SynthConfig, generate_annotated


def tiny_images(n=16, seed=33):
    cfg = SynthConfig(
        image_height=16,
        image_width=16,
        cell_count_range=(2, 4),
        cell_radius_range=(1.5, 2.5),
        psf_sigma=0.6,
        noise_std=0.01,
        min_centroid_margin=2.0,
        seed=seed,
    )
    return [im.image for im in generate_annotated(cfg, n)]


def tiny_dcm_zeroed(head_bias=0.0):
    dcm = model.init_dcm(9, in_channels=4, conv_channels=(3, 3), fc_units=4, dtype=np.float64)
    for _, arr in dcm.named_arrays():
        arr[:] = 0
    dcm.head.bias[:] = head_bias
    return dcm


def tiny_cfg(**kw) -> AdaptConfig:
    base = dict(
        dam_learning_rate=1e-4,
        dcm_learning_rate=1e-3,
        batch_size=8,
        crop_size=16,
        critic_iters_per_dam_step=2,
        weight_clip=0.01,
        total_dam_steps=5,
        seed=5,
    )
    base.update(kw)
    return AdaptConfig(**base)


def test_identical_feature_batches_give_zero_critic_loss(tiny_dcm):
    feats = np.random.default_rng(0).random((4, 4, 8, 8))
    critic_loss, _ = critic_losses(tiny_dcm, feats, feats)
    assert critic_loss == 0.0


def test_constant_critic_losses_are_analytic():
    dcm = tiny_dcm_zeroed(head_bias=1.5)
    rng = np.random.default_rng(1)
    critic_loss, dam_loss = critic_losses(dcm, rng.random((3, 4, 8, 8)), rng.random((5, 4, 8, 8)))
    assert abs(critic_loss) < 1e-12
    assert abs(dam_loss - (-1.5)) < 1e-12


def test_critic_losses_match_scalar_oracle_on_1x1_features():
    # Independent all-scalar forward of the critic on 1x1 spatial features:
    # only the kernel centre of each same-padded 3x3 conv touches the data.
    rng = np.random.default_rng(2)
    dcm = model.init_dcm(4, in_channels=4, conv_channels=(3, 3), fc_units=4, dtype=np.float64)
    for _, arr in dcm.named_arrays():
        arr += rng.normal(0, 0.05, size=arr.shape)
    src = rng.random((2, 4, 1, 1))
    tgt = rng.random((2, 4, 1, 1))

    def scalar_critic(feat):
        a1 = [
            max(0.0, sum(dcm.conv1.weight[o, c, 1, 1] * feat[c, 0, 0] for c in range(4)) + dcm.conv1.bias[o])
            for o in range(3)
        ]
        a2 = [
            max(0.0, sum(dcm.conv2.weight[o, c, 1, 1] * a1[c] for c in range(3)) + dcm.conv2.bias[o])
            for o in range(3)
        ]
        fc = [
            max(0.0, sum(dcm.fc.weight[o, c] * a2[c] for c in range(3)) + dcm.fc.bias[o])
            for o in range(4)
        ]
        return sum(dcm.head.weight[0, c] * fc[c] for c in range(4)) + dcm.head.bias[0]

    src_mean = np.mean([scalar_critic(f) for f in src])
    tgt_mean = np.mean([scalar_critic(f) for f in tgt])
    critic_loss, dam_loss = critic_losses(dcm, src, tgt)
    assert abs(critic_loss - (-(src_mean - tgt_mean))) < 1e-12
    assert abs(dam_loss - (-tgt_mean)) < 1e-12


def test_critic_losses_reject_empty_batches(tiny_dcm):
    with pytest.raises(DataError):
        critic_losses(tiny_dcm, np.empty((0, 4, 8, 8)), np.random.random((1, 4, 8, 8)))


def test_zero_steps_returns_source_encoder_bitwise():
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    imgs = tiny_images()
    dam, dcm, report = train_dam(drm.encoder, imgs, imgs, tiny_cfg(total_dam_steps=0))
    for dam_layer, src_layer in zip(dam.encoder, drm.encoder):
        assert dam_layer.weight.tobytes() == src_layer.weight.tobytes()
        assert dam_layer.bias.tobytes() == src_layer.bias.tobytes()
    assert report.gap == [] and report.critic_loss == []
    assert isinstance(dcm, model.DcmParams)


def test_source_encoder_never_mutated():
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    before = [c.weight.tobytes() + c.bias.tobytes() for c in drm.encoder]
    imgs = tiny_images()
    train_dam(drm.encoder, imgs, imgs, tiny_cfg())
    after = [c.weight.tobytes() + c.bias.tobytes() for c in drm.encoder]
    assert before == after


def test_all_critic_params_clipped_after_every_update():
    cfg = tiny_cfg(total_dam_steps=4, critic_iters_per_dam_step=3)
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    imgs = tiny_images()
    _, dcm, report = train_dam(drm.encoder, imgs, imgs, cfg)
    assert len(report.max_abs_dcm) == 4 * 3
    assert all(m <= cfg.weight_clip + 1e-12 for m in report.max_abs_dcm)
    assert max(abs(arr).max() for _, arr in dcm.named_arrays()) <= cfg.weight_clip


def test_critic_update_leaves_features_and_moves_only_dcm(tiny_dcm):
    rng = np.random.default_rng(3)
    src = rng.random((4, 4, 8, 8))
    tgt = rng.random((4, 4, 8, 8))
    src_bytes, tgt_bytes = src.tobytes(), tgt.tobytes()
    _critic_update(tiny_dcm, src, tgt, lr=1e-3, clip=0.01, rng=np.random.default_rng(0))
    assert src.tobytes() == src_bytes and tgt.tobytes() == tgt_bytes


def test_gradient_isolation_between_updates():
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC, dtype=np.float64)
    dam = model.init_dam(drm.encoder)
    dcm = model.init_dcm(9, in_channels=TINY_ENC[-1], conv_channels=(3, 3), fc_units=4, dtype=np.float64)
    rng = np.random.default_rng(4)
    imgs = np.asarray(tiny_images(4), dtype=np.float64)[:, None]
    feats = model.encode_batch(dam, imgs)

    dam_before = [arr.tobytes() for _, arr in dam.named_arrays()]
    _critic_update(dcm, feats, feats + 0.1, lr=1e-3, clip=0.01, rng=rng)
    assert [arr.tobytes() for _, arr in dam.named_arrays()] == dam_before

    dcm_before = [arr.tobytes() for _, arr in dcm.named_arrays()]
    _dam_update(dam, dcm, imgs, lr=1e-3, rng=rng)
    assert [arr.tobytes() for _, arr in dcm.named_arrays()] == dcm_before
    assert [arr.tobytes() for _, arr in dam.named_arrays()] != dam_before


def test_self_adaptation_gap_stays_near_initial():
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    imgs = tiny_images()
    cfg = tiny_cfg(total_dam_steps=15)
    _, _, report = train_dam(drm.encoder, imgs, imgs, cfg)
    # source == target: the normalized gap is pure sampling noise around its
    # initial effect size; the raw gap additionally shrinks with critic scale.
    tolerance = 2.0
    assert len(report.normalized_gap) == 15
    assert max(abs(g) for g in report.normalized_gap) <= abs(report.initial_normalized_gap) + tolerance


def test_train_dam_replay_is_deterministic():
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    src = tiny_images(seed=33)
    tgt = tiny_images(seed=44)
    a_dam, a_dcm, a_rep = train_dam(drm.encoder, src, tgt, tiny_cfg())
    b_dam, b_dcm, b_rep = train_dam(drm.encoder, src, tgt, tiny_cfg())
    assert params_equal(a_dam, b_dam)
    assert params_equal(a_dcm, b_dcm)
    assert a_rep.gap == b_rep.gap and a_rep.critic_loss == b_rep.critic_loss


def test_cached_source_features_give_same_result():
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    src = tiny_images(seed=33)
    tgt = tiny_images(seed=44)
    a_dam, _, a_rep = train_dam(drm.encoder, src, tgt, tiny_cfg())
    b_dam, _, b_rep = train_dam(drm.encoder, src, tgt, tiny_cfg(cache_source_features=True))
    assert params_equal(a_dam, b_dam)
    assert a_rep.gap == b_rep.gap


def test_target_images_smaller_than_crop_rejected():
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    imgs = tiny_images()
    with pytest.raises(ShapeError, match="target image"):
        train_dam(drm.encoder, imgs, [np.zeros((8, 8))], tiny_cfg(crop_size=16))


def test_crop_sampling_covers_larger_targets():
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    src = tiny_images()
    big = [np.random.default_rng(i).random((24, 40)).astype(np.float32) for i in range(6)]
    _, _, report = train_dam(drm.encoder, src, big, tiny_cfg(total_dam_steps=2))
    assert len(report.gap) == 2


def test_adapt_config_validation():
    with pytest.raises(ConfigError):
        tiny_cfg(crop_size=20).validate()
    with pytest.raises(ConfigError):
        tiny_cfg(weight_clip=0.0).validate()
    with pytest.raises(ConfigError):
        tiny_cfg(critic_iters_per_dam_step=0).validate()


def test_report_csv(tmp_path):
    drm = model.init_drm(2, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC)
    imgs = tiny_images()
    _, _, report = train_dam(drm.encoder, imgs, imgs, tiny_cfg(total_dam_steps=3))
    path = tmp_path / "adapt.csv"
    report.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,critic_loss,dam_loss,gap"
    assert len(lines) == 4
