"""Network definitions: source density regressor (encoder+decoder), target
encoder, and the scalar domain critic.

The density regressor stacks eight convolutions (32, 64, 128, 512, 128, 64,
32, 1 kernels); the encoder half interleaves three 2x2 max pools, the decoder
half three nearest-neighbour upsamples, so features live at 1/8 resolution
with 512 channels. The critic scores a feature map with two convolutions, a
global average pool, and a 256-unit fully connected stage ending in a linear
scalar. Hidden activations are ReLU; the density head and critic head are
linear. Parameters are plain numpy arrays; forwards never mutate them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ShapeError

ENCODER_CHANNELS = (32, 64, 128, 512)
DECODER_CHANNELS = (128, 64, 32, 1)
CRITIC_CONV_CHANNELS = (128, 256)
CRITIC_FC_UNITS = 256
CRITIC_DROPOUT_RATE = 0.5  # fixed at training time, disabled at evaluation

DOWNSCALE = 8  # three 2x2 pools


@dataclass
class Conv2d:
    weight: np.ndarray  # (out_c, in_c, k, k)
    bias: np.ndarray  # (out_c,)

    def copy(self) -> "Conv2d":
        return Conv2d(self.weight.copy(), self.bias.copy())


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def copy(self) -> "Dense":
        return Dense(self.weight.copy(), self.bias.copy())


@dataclass
class DrmParams:
    """Source density regressor: encoder and decoder convolution stacks."""

    encoder: list[Conv2d]
    decoder: list[Conv2d]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, c in enumerate(self.encoder):
            out += [(f"enc{i}.weight", c.weight), (f"enc{i}.bias", c.bias)]
        for i, c in enumerate(self.decoder):
            out += [(f"dec{i}.weight", c.weight), (f"dec{i}.bias", c.bias)]
        return out

    def copy(self) -> "DrmParams":
        return DrmParams([c.copy() for c in self.encoder], [c.copy() for c in self.decoder])


@dataclass
class DamParams:
    """Target-domain encoder; layerwise shape-identical to the source encoder."""

    encoder: list[Conv2d]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, c in enumerate(self.encoder):
            out += [(f"enc{i}.weight", c.weight), (f"enc{i}.bias", c.bias)]
        return out

    def copy(self) -> "DamParams":
        return DamParams([c.copy() for c in self.encoder])


@dataclass
class DcmParams:
    """Domain critic: two convolutions, pooled FC stage, linear scalar head."""

    conv1: Conv2d
    conv2: Conv2d
    fc: Dense
    head: Dense

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("conv1.weight", self.conv1.weight),
            ("conv1.bias", self.conv1.bias),
            ("conv2.weight", self.conv2.weight),
            ("conv2.bias", self.conv2.bias),
            ("fc.weight", self.fc.weight),
            ("fc.bias", self.fc.bias),
            ("head.weight", self.head.weight),
            ("head.bias", self.head.bias),
        ]

    def copy(self) -> "DcmParams":
        return DcmParams(self.conv1.copy(), self.conv2.copy(), self.fc.copy(), self.head.copy())


def _conv_init(rng: np.random.Generator, out_c: int, in_c: int, k: int, dtype) -> Conv2d:
    weight = nn.he_uniform(rng, (out_c, in_c, k, k), fan_in=in_c * k * k, dtype=dtype)
    return Conv2d(weight, np.zeros(out_c, dtype=dtype))


def _dense_init(rng: np.random.Generator, out_n: int, in_n: int, dtype) -> Dense:
    return Dense(nn.he_uniform(rng, (out_n, in_n), fan_in=in_n, dtype=dtype), np.zeros(out_n, dtype=dtype))


def init_drm(
    seed: int,
    encoder_channels: tuple[int, ...] = ENCODER_CHANNELS,
    decoder_channels: tuple[int, ...] = DECODER_CHANNELS,
    dtype=np.float32,
) -> DrmParams:
    """Seeded He-uniform init; biases start at zero."""
    rng = np.random.default_rng(seed)
    encoder = []
    in_c = 1
    for out_c in encoder_channels:
        encoder.append(_conv_init(rng, out_c, in_c, 3, dtype))
        in_c = out_c
    decoder = []
    for i, out_c in enumerate(decoder_channels):
        k = 1 if i == len(decoder_channels) - 1 else 3
        decoder.append(_conv_init(rng, out_c, in_c, k, dtype))
        in_c = out_c
    return DrmParams(encoder, decoder)


def init_dam(encoder: "list[Conv2d] | DrmParams") -> DamParams:
    """Target encoder initialised as an exact copy of the source encoder."""
    return DamParams([c.copy() for c in encoder_layers(encoder)])


def init_dcm(
    seed: int,
    in_channels: int = ENCODER_CHANNELS[-1],
    conv_channels: tuple[int, int] = CRITIC_CONV_CHANNELS,
    fc_units: int = CRITIC_FC_UNITS,
    dtype=np.float32,
) -> DcmParams:
    rng = np.random.default_rng(seed)
    conv1 = _conv_init(rng, conv_channels[0], in_channels, 3, dtype)
    conv2 = _conv_init(rng, conv_channels[1], conv_channels[0], 3, dtype)
    fc = _dense_init(rng, fc_units, conv_channels[1], dtype)
    head = _dense_init(rng, 1, fc_units, dtype)
    return DcmParams(conv1, conv2, fc, head)


def encoder_layers(params: "DrmParams | DamParams | list[Conv2d]") -> list[Conv2d]:
    """Accept a DRM, a DAM, or a bare layer list wherever an encoder is expected."""
    if isinstance(params, (DrmParams, DamParams)):
        return params.encoder
    return list(params)


def _check_input_shape(x: np.ndarray) -> None:
    h, w = x.shape[2], x.shape[3]
    if h % DOWNSCALE or w % DOWNSCALE:
        raise ShapeError(
            f"image dimensions must be divisible by {DOWNSCALE}, got {h}x{w}"
        )


# ---------------------------------------------------------------------------
# Encoder: conv-relu-pool x3, conv-relu. Cached variants keep what backward
# needs: each conv input, each relu output, each pool argmax.
# ---------------------------------------------------------------------------


@dataclass
class EncoderCache:
    conv_inputs: list[np.ndarray]
    relu_outputs: list[np.ndarray]
    pool_indices: list[np.ndarray]


def encode_batch(params, x: np.ndarray) -> np.ndarray:
    """Map (B,1,H,W) images to (B,Z,H/8,W/8) features."""
    feat, _ = _encode_impl(encoder_layers(params), x, keep_cache=False)
    return feat


def encode_cached(params, x: np.ndarray) -> tuple[np.ndarray, EncoderCache]:
    return _encode_impl(encoder_layers(params), x, keep_cache=True)


def _encode_impl(layers: list[Conv2d], x: np.ndarray, keep_cache: bool):
    _check_input_shape(x)
    conv_inputs, relu_outputs, pool_indices = [], [], []
    h = x
    for i, layer in enumerate(layers):
        if keep_cache:
            conv_inputs.append(h)
        h = nn.relu(nn.conv2d(h, layer.weight, layer.bias))
        if keep_cache:
            relu_outputs.append(h)
        if i < len(layers) - 1:
            h, idx = nn.maxpool2(h)
            if keep_cache:
                pool_indices.append(idx)
    cache = EncoderCache(conv_inputs, relu_outputs, pool_indices) if keep_cache else None
    return h, cache


def encode_backward(
    params, cache: EncoderCache, gfeat: np.ndarray, need_gx: bool = False
) -> tuple[list[Conv2d], np.ndarray | None]:
    """Backprop through the encoder; returns per-layer grads (+input grad)."""
    layers = encoder_layers(params)
    grads: list[Conv2d] = [None] * len(layers)  # type: ignore[list-item]
    g = gfeat
    for i in range(len(layers) - 1, -1, -1):
        if i < len(layers) - 1:
            g = nn.maxpool2_backward(cache.pool_indices[i], g)
        g = nn.relu_backward(cache.relu_outputs[i], g)
        last = i == 0 and not need_gx
        gx, gw, gb = nn.conv2d_backward(cache.conv_inputs[i], layers[i].weight, g, need_gx=not last)
        grads[i] = Conv2d(gw, gb)
        g = gx
    return grads, g


# ---------------------------------------------------------------------------
# Decoder: (up-conv-relu) x3, then a linear 1x1 conv head.
# ---------------------------------------------------------------------------


@dataclass
class DecoderCache:
    conv_inputs: list[np.ndarray]
    relu_outputs: list[np.ndarray]


def decode_batch(decoder: list[Conv2d], feat: np.ndarray) -> np.ndarray:
    """Map (B,Z,h,w) features to (B,8h,8w) density estimates."""
    out, _ = _decode_impl(decoder, feat, keep_cache=False)
    return out


def decode_cached(decoder: list[Conv2d], feat: np.ndarray) -> tuple[np.ndarray, DecoderCache]:
    return _decode_impl(decoder, feat, keep_cache=True)


def _decode_impl(decoder: list[Conv2d], feat: np.ndarray, keep_cache: bool):
    conv_inputs, relu_outputs = [], []
    h = feat
    for i, layer in enumerate(decoder):
        last = i == len(decoder) - 1
        if not last:
            h = nn.upsample2(h)
        if keep_cache:
            conv_inputs.append(h)
        h = nn.conv2d(h, layer.weight, layer.bias)
        if not last:
            h = nn.relu(h)
            if keep_cache:
                relu_outputs.append(h)
    out = h[:, 0, :, :]
    cache = DecoderCache(conv_inputs, relu_outputs) if keep_cache else None
    return out, cache


def decode_backward(
    decoder: list[Conv2d], cache: DecoderCache, gout: np.ndarray
) -> tuple[list[Conv2d], np.ndarray]:
    """Backprop through the decoder; returns per-layer grads and feature grads."""
    grads: list[Conv2d] = [None] * len(decoder)  # type: ignore[list-item]
    g = gout[:, None, :, :]
    for i in range(len(decoder) - 1, -1, -1):
        if i < len(decoder) - 1:
            g = nn.relu_backward(cache.relu_outputs[i], g)
        gx, gw, gb = nn.conv2d_backward(cache.conv_inputs[i], decoder[i].weight, g, need_gx=True)
        grads[i] = Conv2d(gw, gb)
        # An upsample precedes every conv except the head, so fold its backward in here.
        g = nn.upsample2_backward(gx) if i < len(decoder) - 1 else gx
    return grads, g


# ---------------------------------------------------------------------------
# Critic.
# ---------------------------------------------------------------------------


@dataclass
class CriticCache:
    feats: np.ndarray
    relu1: np.ndarray
    relu2: np.ndarray
    pooled: np.ndarray
    fc_relu: np.ndarray
    dropout_mask: np.ndarray | None
    fc_out: np.ndarray


def critic_batch(
    dcm: DcmParams, feats: np.ndarray, train_mode: bool = False, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Score a (B,Z,h,w) feature batch; returns (B,) scalars."""
    scores, _ = critic_cached(dcm, feats, train_mode=train_mode, rng=rng)
    return scores


def critic_cached(
    dcm: DcmParams, feats: np.ndarray, train_mode: bool = False, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, CriticCache]:
    a1 = nn.relu(nn.conv2d(feats, dcm.conv1.weight, dcm.conv1.bias))
    a2 = nn.relu(nn.conv2d(a1, dcm.conv2.weight, dcm.conv2.bias))
    pooled = nn.global_avgpool(a2)
    fc_relu = nn.relu(nn.dense(pooled, dcm.fc.weight, dcm.fc.bias))
    if train_mode:
        if rng is None:
            raise ValueError("train_mode critic needs an rng for the dropout mask")
        fc_out, mask = nn.dropout(fc_relu, CRITIC_DROPOUT_RATE, rng)
    else:
        fc_out, mask = fc_relu, None
    scores = nn.dense(fc_out, dcm.head.weight, dcm.head.bias)[:, 0]
    return scores, CriticCache(feats, a1, a2, pooled, fc_relu, mask, fc_out)


def critic_backward(
    dcm: DcmParams, cache: CriticCache, gscores: np.ndarray, need_gfeats: bool = False
) -> tuple[DcmParams, np.ndarray | None]:
    """Backprop through the critic; returns param grads (+feature grads)."""
    g = gscores[:, None].astype(cache.fc_out.dtype)
    g, ghw, ghb = nn.dense_backward(cache.fc_out, dcm.head.weight, g)
    if cache.dropout_mask is not None:
        g = nn.dropout_backward(cache.dropout_mask, CRITIC_DROPOUT_RATE, g)
    g = nn.relu_backward(cache.fc_relu, g)
    g, gfw, gfb = nn.dense_backward(cache.pooled, dcm.fc.weight, g)
    g = nn.global_avgpool_backward(g, cache.relu2.shape[2], cache.relu2.shape[3])
    g = nn.relu_backward(cache.relu2, g)
    g, g2w, g2b = nn.conv2d_backward(cache.relu1, dcm.conv2.weight, g, need_gx=True)
    g = nn.relu_backward(cache.relu1, g)
    gfeats, g1w, g1b = nn.conv2d_backward(cache.feats, dcm.conv1.weight, g, need_gx=need_gfeats)
    grads = DcmParams(Conv2d(g1w, g1b), Conv2d(g2w, g2b), Dense(gfw, gfb), Dense(ghw, ghb))
    return grads, gfeats


# ---------------------------------------------------------------------------
# Single-image conveniences.
# ---------------------------------------------------------------------------


def encode(params, img: np.ndarray) -> np.ndarray:
    """Map one (H,W) image to its (Z,H/8,W/8) feature map."""
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-D grayscale image, got shape {img.shape}")
    return encode_batch(params, img[None, None, :, :])[0]


def decode(decoder: list[Conv2d], feat: np.ndarray) -> np.ndarray:
    """Map one (Z,h,w) feature map to its (8h,8w) density estimate."""
    if feat.ndim != 3:
        raise ShapeError(f"expected a 3-D feature map, got shape {feat.shape}")
    return decode_batch(decoder, feat[None])[0]


def drm_forward(params: DrmParams, img: np.ndarray) -> np.ndarray:
    """Full regressor forward; output may contain negatives (linear head)."""
    return decode(params.decoder, encode(params.encoder, img))


def critic_forward(
    dcm: DcmParams, feat: np.ndarray, train_mode: bool = False, rng: np.random.Generator | None = None
) -> float:
    """Score one (Z,h,w) feature map."""
    if feat.ndim != 3:
        raise ShapeError(f"expected a 3-D feature map, got shape {feat.shape}")
    return float(critic_batch(dcm, feat[None], train_mode=train_mode, rng=rng)[0])
