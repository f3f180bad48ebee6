"""Checkpoint container shared by all three models.

A checkpoint is an ``.npz`` archive: one little-endian float32 array per
named parameter tensor plus a ``__meta__`` JSON record carrying the model
kind (``drm``/``dam``/``dcm``), an architecture hash over the tensor
name/shape plan, the init seed, and the epoch/step it was taken at.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import Conv2d, DamParams, DcmParams, Dense, DrmParams

META_KEY = "__meta__"


def arch_hash(named: list[tuple[str, np.ndarray]]) -> str:
    """Short stable digest of the parameter name/shape plan."""
    plan = ";".join(f"{name}:{','.join(map(str, arr.shape))}" for name, arr in named)
    return hashlib.sha256(plan.encode()).hexdigest()[:12]


def _kind_of(params) -> str:
    if isinstance(params, DrmParams):
        return "drm"
    if isinstance(params, DamParams):
        return "dam"
    if isinstance(params, DcmParams):
        return "dcm"
    raise TypeError(f"unsupported parameter bundle: {type(params).__name__}")


def save_checkpoint(
    path: str | Path,
    params: "DrmParams | DamParams | DcmParams",
    seed: int | None = None,
    epoch: int | None = None,
    extra: dict | None = None,
) -> None:
    named = params.named_arrays()
    meta = {
        "format": "densecount-checkpoint-v1",
        "kind": _kind_of(params),
        "arch_hash": arch_hash(named),
        "seed": seed,
        "epoch": epoch,
        "extra": extra or {},
    }
    arrays = {name: np.asarray(arr, dtype="<f4") for name, arr in named}
    arrays[META_KEY] = np.array(json.dumps(meta))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _conv_stack(data: dict[str, np.ndarray], prefix: str) -> list[Conv2d]:
    layers = []
    i = 0
    while f"{prefix}{i}.weight" in data:
        layers.append(Conv2d(data[f"{prefix}{i}.weight"], data[f"{prefix}{i}.bias"]))
        i += 1
    if not layers:
        raise DataError(f"checkpoint has no '{prefix}*' tensors")
    return layers


def load_checkpoint(path: str | Path) -> tuple["DrmParams | DamParams | DcmParams", dict]:
    """Load a checkpoint; returns (params, metadata)."""
    with np.load(path) as npz:
        data = {name: np.array(npz[name]) for name in npz.files}
    if META_KEY not in data:
        raise DataError(f"{path}: not a densecount checkpoint (missing {META_KEY})")
    meta = json.loads(str(data.pop(META_KEY)))
    kind = meta.get("kind")
    if kind == "drm":
        params = DrmParams(_conv_stack(data, "enc"), _conv_stack(data, "dec"))
    elif kind == "dam":
        params = DamParams(_conv_stack(data, "enc"))
    elif kind == "dcm":
        params = DcmParams(
            Conv2d(data["conv1.weight"], data["conv1.bias"]),
            Conv2d(data["conv2.weight"], data["conv2.bias"]),
            Dense(data["fc.weight"], data["fc.bias"]),
            Dense(data["head.weight"], data["head.bias"]),
        )
    else:
        raise DataError(f"{path}: unknown checkpoint kind {kind!r}")
    if meta.get("arch_hash") != arch_hash(params.named_arrays()):
        raise DataError(f"{path}: architecture hash mismatch")
    return params, meta


def load_encoder(path: str | Path) -> list[Conv2d]:
    """Load the encoder half of a DRM checkpoint, or a DAM checkpoint's layers."""
    params, _ = load_checkpoint(path)
    if isinstance(params, DcmParams):
        raise DataError(f"{path}: critic checkpoint has no image encoder")
    return params.encoder


def load_decoder(path: str | Path) -> list[Conv2d]:
    """Load the decoder half of a DRM checkpoint."""
    params, _ = load_checkpoint(path)
    if not isinstance(params, DrmParams):
        raise DataError(f"{path}: only DRM checkpoints carry a decoder")
    return params.decoder
