"""Unsupervised adversarial adaptation of the target encoder.

The critic ascends the gap between its mean scores on source features
(from the frozen source encoder) and target features (from the trainable
target encoder); the target encoder then moves its features toward higher
critic scores. Critic weights are clipped to [-c, c] after every update,
the classic Wasserstein-surrogate constraint. Per step: sample a batch of
each domain, crop targets, run ``critic_iters`` critic updates, then one
encoder update. Training runs a fixed step budget and returns the final
state; the report tracks a raw and a spread-normalized score gap on a
fixed held-out probe batch (the raw gap scales with the critic's output
magnitude, so only the normalized one is comparable across steps).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model
from .errors import ConfigError, DataError, ShapeError, TrainingDivergedError


@dataclass(frozen=True)
class AdaptConfig:
    dam_learning_rate: float = 1e-8
    dcm_learning_rate: float = 1e-8
    batch_size: int = 100
    crop_size: int = 256
    critic_iters_per_dam_step: int = 5
    weight_clip: float = 0.01
    total_dam_steps: int = 500
    seed: int = 0
    cache_source_features: bool = False

    def validate(self) -> "AdaptConfig":
        if self.dam_learning_rate < 0 or self.dcm_learning_rate < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.crop_size < 8 or self.crop_size % 8:
            raise ConfigError(f"crop_size must be a positive multiple of 8, got {self.crop_size}")
        if self.critic_iters_per_dam_step < 1:
            raise ConfigError(
                f"critic_iters_per_dam_step must be >= 1, got {self.critic_iters_per_dam_step}"
            )
        if not self.weight_clip > 0:
            raise ConfigError(f"weight_clip must be > 0, got {self.weight_clip}")
        if self.total_dam_steps < 0:
            raise ConfigError(f"total_dam_steps must be >= 0, got {self.total_dam_steps}")
        return self


@dataclass
class AdaptReport:
    """Per-step diagnostics; gap = mean critic(source) - mean critic(target) on the probe.

    The critic's output scale grows by orders of magnitude while it trains,
    so the raw gap is not comparable across steps; normalized_gap divides by
    the pooled score spread (an effect size) and is the stable diagnostic.
    """

    critic_loss: list[float] = field(default_factory=list)
    dam_loss: list[float] = field(default_factory=list)
    gap: list[float] = field(default_factory=list)
    normalized_gap: list[float] = field(default_factory=list)
    max_abs_dcm: list[float] = field(default_factory=list)  # one entry per critic update
    initial_gap: float = 0.0
    initial_normalized_gap: float = 0.0
    min_gap_step: int = 0  # argmin of |normalized_gap|, 1-based; diagnostic

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "critic_loss", "dam_loss", "gap"])
            rows = zip(self.critic_loss, self.dam_loss, self.gap)
            for i, (cl, dl, g) in enumerate(rows, start=1):
                writer.writerow([i, repr(cl), repr(dl), repr(g)])


def _stack_feats(feats) -> np.ndarray:
    arr = np.asarray(feats) if not isinstance(feats, np.ndarray) else feats
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[0] == 0:
        raise DataError(f"expected a nonempty batch of 3-D feature maps, got shape {arr.shape}")
    return arr


def critic_losses(dcm: model.DcmParams, src_feats, tgt_feats) -> tuple[float, float]:
    """(critic objective, encoder objective) for the given feature batches.

    critic_loss = -(mean critic(src) - mean critic(tgt)); descending it
    widens the score gap. dam_loss = -mean critic(tgt); descending it pulls
    target features toward source-like scores. Dropout is off here; the
    training loop applies its own seeded dropout.
    """
    src_scores = model.critic_batch(dcm, _stack_feats(src_feats))
    tgt_scores = model.critic_batch(dcm, _stack_feats(tgt_feats))
    gap = float(src_scores.mean() - tgt_scores.mean())
    return -gap, -float(tgt_scores.mean())


def _sample_indices(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    return rng.choice(n, size=size, replace=n < size)


def _crop(rng: np.random.Generator, img: np.ndarray, crop: int) -> np.ndarray:
    h, w = img.shape
    top = int(rng.integers(0, h - crop + 1))
    left = int(rng.integers(0, w - crop + 1))
    return img[top : top + crop, left : left + crop]


def _sgd(params, grads, lr: float) -> None:
    for (_, p), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
        p -= lr * g.astype(p.dtype, copy=False)


def _clip_params(params, bound: float) -> float:
    worst = 0.0
    for _, arr in params.named_arrays():
        np.clip(arr, -bound, bound, out=arr)
        worst = max(worst, float(np.max(np.abs(arr))) if arr.size else 0.0)
    return worst


def _add_grads(a: model.DcmParams, b: model.DcmParams) -> model.DcmParams:
    for (_, ga), (_, gb) in zip(a.named_arrays(), b.named_arrays()):
        ga += gb
    return a


def _critic_update(
    dcm: model.DcmParams,
    src_feats: np.ndarray,
    tgt_feats: np.ndarray,
    lr: float,
    clip: float,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One critic descent step on -(mean src - mean tgt) plus clipping.

    Returns (critic_loss before the update, max |param| after clipping).
    """
    dtype = src_feats.dtype
    n_src, n_tgt = src_feats.shape[0], tgt_feats.shape[0]
    src_scores, src_cache = model.critic_cached(dcm, src_feats, train_mode=True, rng=rng)
    tgt_scores, tgt_cache = model.critic_cached(dcm, tgt_feats, train_mode=True, rng=rng)
    loss = -float(src_scores.mean() - tgt_scores.mean())
    grads, _ = model.critic_backward(
        dcm, src_cache, np.full(n_src, -1.0 / n_src, dtype=dtype), need_gfeats=False
    )
    tgt_grads, _ = model.critic_backward(
        dcm, tgt_cache, np.full(n_tgt, 1.0 / n_tgt, dtype=dtype), need_gfeats=False
    )
    _add_grads(grads, tgt_grads)
    _sgd(dcm, grads, lr)
    max_abs = _clip_params(dcm, clip)
    return loss, max_abs


def _dam_update(
    dam: model.DamParams,
    dcm: model.DcmParams,
    tgt_batch: np.ndarray,
    lr: float,
    rng: np.random.Generator,
) -> float:
    """One encoder descent step on -mean critic(target); critic untouched."""
    feats, enc_cache = model.encode_cached(dam, tgt_batch)
    scores, crit_cache = model.critic_cached(dcm, feats, train_mode=True, rng=rng)
    loss = -float(scores.mean())
    gscores = np.full(scores.shape[0], -1.0 / scores.shape[0], dtype=feats.dtype)
    _, gfeats = model.critic_backward(dcm, crit_cache, gscores, need_gfeats=True)
    enc_grads, _ = model.encode_backward(dam, enc_cache, gfeats)
    _sgd(dam, model.DamParams(enc_grads), lr)
    return loss


def _probe_gap(dcm, src_feats: np.ndarray, dam, tgt_batch: np.ndarray) -> tuple[float, float]:
    """Raw and spread-normalized critic score gap on the probe batches."""
    tgt_feats = model.encode_batch(dam, tgt_batch)
    src_scores = model.critic_batch(dcm, src_feats)
    tgt_scores = model.critic_batch(dcm, tgt_feats)
    gap = float(src_scores.mean() - tgt_scores.mean())
    pooled = float(np.sqrt(0.5 * (src_scores.var() + tgt_scores.var())))
    return gap, gap / (pooled + 1e-12)


def train_dam(
    ecnn,
    source_imgs,
    target_imgs,
    cfg: AdaptConfig,
) -> tuple[model.DamParams, model.DcmParams, AdaptReport]:
    """Adversarially adapt a copy of the frozen source encoder to the targets.

    ``ecnn`` may be a DrmParams, DamParams, or encoder layer list; it is
    only read. Deterministic given cfg.seed. With total_dam_steps == 0 the
    returned encoder equals the source encoder exactly.
    """
    cfg.validate()
    frozen = model.encoder_layers(ecnn)
    dtype = frozen[0].weight.dtype
    src = [np.asarray(getattr(im, "image", im), dtype=dtype) for im in source_imgs]
    tgt = [np.asarray(getattr(im, "image", im), dtype=dtype) for im in target_imgs]
    if not src or not tgt:
        raise DataError("adaptation needs nonempty source and target image sets")
    if len({im.shape for im in src}) > 1:
        raise DataError("source images must share one shape")
    if any(im.shape[0] < cfg.crop_size or im.shape[1] < cfg.crop_size for im in tgt):
        raise ShapeError(f"every target image must be at least {cfg.crop_size} pixels per side")

    rng = np.random.default_rng(cfg.seed)
    dam = model.init_dam(frozen)
    dcm = model.init_dcm(cfg.seed + 1, in_channels=frozen[-1].weight.shape[0], dtype=dtype)
    report = AdaptReport()

    src_arr = np.asarray(src, dtype=dtype)[:, None, :, :]
    cached_src_feats = None
    if cfg.cache_source_features:
        cached_src_feats = model.encode_batch(frozen, src_arr)

    # Fixed held-out probe batch for the gap trajectory.
    probe_n = min(cfg.batch_size, len(src), len(tgt))
    probe_src = src_arr[_sample_indices(rng, len(src), probe_n)]
    probe_src_feats = model.encode_batch(frozen, probe_src)
    probe_tgt = np.asarray(
        [_crop(rng, tgt[i], cfg.crop_size) for i in _sample_indices(rng, len(tgt), probe_n)],
        dtype=dtype,
    )[:, None, :, :]

    report.initial_gap, report.initial_normalized_gap = _probe_gap(
        dcm, probe_src_feats, dam, probe_tgt
    )
    min_abs_gap = np.inf

    for step in range(1, cfg.total_dam_steps + 1):
        src_idx = _sample_indices(rng, len(src), cfg.batch_size)
        tgt_idx = _sample_indices(rng, len(tgt), cfg.batch_size)
        tgt_batch = np.asarray(
            [_crop(rng, tgt[i], cfg.crop_size) for i in tgt_idx], dtype=dtype
        )[:, None, :, :]

        if cached_src_feats is not None:
            src_feats = cached_src_feats[src_idx]
        else:
            src_feats = model.encode_batch(frozen, src_arr[src_idx])
        tgt_feats = model.encode_batch(dam, tgt_batch)

        critic_loss = 0.0
        for _ in range(cfg.critic_iters_per_dam_step):
            critic_loss, max_abs = _critic_update(
                dcm, src_feats, tgt_feats, cfg.dcm_learning_rate, cfg.weight_clip, rng
            )
            report.max_abs_dcm.append(max_abs)
        dam_loss = _dam_update(dam, dcm, tgt_batch, cfg.dam_learning_rate, rng)
        if not (np.isfinite(critic_loss) and np.isfinite(dam_loss)):
            raise TrainingDivergedError(
                f"non-finite adversarial loss at step {step} "
                f"(critic={critic_loss}, dam={dam_loss})"
            )

        gap, norm_gap = _probe_gap(dcm, probe_src_feats, dam, probe_tgt)
        report.critic_loss.append(critic_loss)
        report.dam_loss.append(dam_loss)
        report.gap.append(gap)
        report.normalized_gap.append(norm_gap)
        if abs(norm_gap) < min_abs_gap:
            min_abs_gap = abs(norm_gap)
            report.min_gap_step = step

    return dam, dcm, report
