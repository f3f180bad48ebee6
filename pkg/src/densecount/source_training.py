"""Supervised training of the source density regressor.

Minimizes the batch-mean of per-image summed squared density errors with
momentum SGD (v <- mu*v - lr*grad; theta <- theta + v), shuffling each
epoch and keeping the checkpoint with the lowest validation MSE.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model
from .errors import ConfigError, DataError, TrainingDivergedError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 100
    epochs: int = 3000
    seed: int = 0
    validation_fraction: float = 0.2
    # Optional conditioning aid: train against scale*density, then fold 1/scale
    # back into the linear head so returned params predict true densities.
    target_scale: float = 1.0

    def validate(self) -> "TrainConfig":
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )
        if not self.target_scale > 0:
            raise ConfigError(f"target_scale must be > 0, got {self.target_scale}")
        return self


@dataclass
class TrainReport:
    """Per-epoch curves plus the selected checkpoint's epoch (1-based)."""

    train_loss: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: float = float("inf")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_mse"])
            for i, (tl, vm) in enumerate(zip(self.train_loss, self.val_mse), start=1):
                writer.writerow([i, repr(tl), repr(vm)])


def _image_of(item) -> np.ndarray:
    return np.asarray(getattr(item, "image", item))


def _stack_pairs(data, dtype) -> tuple[np.ndarray, np.ndarray]:
    if len(data) == 0:
        raise DataError("training data is empty")
    images, targets = [], []
    shape = None
    for img, density in data:
        arr = _image_of(img)
        den = np.asarray(density)
        if shape is None:
            shape = arr.shape
        if arr.shape != shape or den.shape != shape:
            raise DataError(
                f"inconsistent shapes: image {arr.shape}, density {den.shape}, expected {shape}"
            )
        images.append(arr)
        targets.append(den)
    x = np.asarray(images, dtype=dtype)[:, None, :, :]
    y = np.asarray(targets, dtype=dtype)
    return x, y


def mse_loss(params: model.DrmParams, batch) -> float:
    """Batch-mean of per-image summed squared pixel errors."""
    dtype = params.decoder[0].weight.dtype
    x, y = _stack_pairs(batch, dtype)
    pred = model.decode_batch(params.decoder, model.encode_batch(params.encoder, x))
    resid = pred - y
    return float(np.sum(resid * resid, dtype=np.float64) / x.shape[0])


def _loss_and_grads(params: model.DrmParams, x: np.ndarray, y: np.ndarray):
    feat, enc_cache = model.encode_cached(params.encoder, x)
    pred, dec_cache = model.decode_cached(params.decoder, feat)
    resid = pred - y
    loss = float(np.sum(resid * resid, dtype=np.float64) / x.shape[0])
    gout = (2.0 / x.shape[0]) * resid
    dec_grads, gfeat = model.decode_backward(params.decoder, dec_cache, gout.astype(x.dtype))
    enc_grads, _ = model.encode_backward(params.encoder, enc_cache, gfeat)
    return loss, model.DrmParams(enc_grads, dec_grads)


def _dataset_mse(params: model.DrmParams, x: np.ndarray, y: np.ndarray, batch_size: int) -> float:
    total = 0.0
    for start in range(0, x.shape[0], batch_size):
        xb, yb = x[start : start + batch_size], y[start : start + batch_size]
        pred = model.decode_batch(params.decoder, model.encode_batch(params.encoder, xb))
        resid = pred - yb
        total += float(np.sum(resid * resid, dtype=np.float64))
    return total / x.shape[0]


def _sgd_step(params, grads, velocity, lr: float, momentum: float) -> None:
    for (_, p), (_, g), v in zip(params.named_arrays(), grads.named_arrays(), velocity):
        v *= momentum
        v -= lr * g
        p += v


def train_source_drm(
    data,
    cfg: TrainConfig,
    init: model.DrmParams | None = None,
) -> tuple[model.DrmParams, TrainReport]:
    """Train on (image, density) pairs; returns the best-validation checkpoint.

    Deterministic for a fixed (cfg, init): the split, epoch shuffles, and
    parameter init all derive from cfg.seed. Reported losses are in
    target-scaled units when cfg.target_scale != 1.
    """
    cfg.validate()
    params = init.copy() if init is not None else model.init_drm(cfg.seed)
    dtype = params.decoder[0].weight.dtype
    x, y = _stack_pairs(data, dtype)
    if cfg.target_scale != 1.0:
        y = y * dtype.type(cfg.target_scale)

    n = x.shape[0]
    n_val = max(1, round(cfg.validation_fraction * n))
    n_train = n - n_val
    if n_train < 1:
        raise DataError(f"no training images left after holding out {n_val} for validation")
    if cfg.batch_size > n_train:
        raise DataError(f"batch_size {cfg.batch_size} exceeds training-set size {n_train}")

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    x_train, y_train = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    velocity = [np.zeros_like(p) for _, p in params.named_arrays()]
    report = TrainReport()
    best = params.copy()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = _loss_and_grads(params, x_train[batch], y_train[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch} "
                    f"(learning_rate={cfg.learning_rate})"
                )
            _sgd_step(params, grads, velocity, cfg.learning_rate, cfg.momentum)
            epoch_loss += loss
            n_batches += 1
        val_mse = _dataset_mse(params, x_val, y_val, cfg.batch_size)
        report.train_loss.append(epoch_loss / n_batches)
        report.val_mse.append(val_mse)
        if val_mse < report.best_val_mse:
            report.best_val_mse = val_mse
            report.best_epoch = epoch
            best = params.copy()

    if cfg.target_scale != 1.0:
        head = best.decoder[-1]
        head.weight /= dtype.type(cfg.target_scale)
        head.bias /= dtype.type(cfg.target_scale)
    return best, report
