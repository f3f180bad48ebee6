"""Command-line pipeline: synth, shift, train-drm, adapt, count, eval.

Runs are config-driven for reproducibility: an INI-style file with
sections [run], [synth], [shift], [kernel], [train], [adapt], [paths]
mirrors the library config records; unknown keys are rejected and every
command-line flag overrides its config key. The [run] seed seeds any
section that does not set its own. Exit codes: 0 success, 2 usage or
config error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, dataio, evalcount, model
from .adaptation import AdaptConfig, train_dam
from .densitymap import KernelConfig
from .errors import (
    AnnotationError,
    ConfigError,
    DataError,
    PlacementError,
    ShapeError,
    TrainingDivergedError,
)
from .source_training import TrainConfig, train_source_drm
from .synthgen import ShiftConfig, SynthConfig, generate_annotated, shift_dataset

_SECTION_TYPES = {
    "synth": SynthConfig,
    "shift": ShiftConfig,
    "kernel": KernelConfig,
    "train": TrainConfig,
    "adapt": AdaptConfig,
}
_PATH_KEYS = {"dataset_dir", "checkpoint_dir", "report_dir"}


@dataclasses.dataclass
class RunConfig:
    seed: int = 0
    synth: SynthConfig = dataclasses.field(default_factory=SynthConfig)
    shift: ShiftConfig = dataclasses.field(default_factory=ShiftConfig)
    kernel: KernelConfig = dataclasses.field(default_factory=KernelConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    adapt: AdaptConfig = dataclasses.field(default_factory=AdaptConfig)
    paths: dict[str, str] = dataclasses.field(default_factory=dict)


def _coerce(default, raw: str):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != len(default):
            raise ConfigError(f"expected {len(default)} comma-separated values, got {raw!r}")
        return tuple(type(d)(p) for d, p in zip(default, parts))
    return raw


def load_run_config(path: str | Path | None, seed_override: int | None = None) -> RunConfig:
    """Parse the INI run config; unknown sections or keys raise ConfigError."""
    sections: dict[str, dict[str, str]] = {}
    if path is not None:
        if not Path(path).is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path)
        sections = {name: dict(parser[name]) for name in parser.sections()}

    seed = 0
    run_section = sections.pop("run", {})
    unknown_run = set(run_section) - {"seed"}
    if unknown_run:
        raise ConfigError(f"unknown [run] keys: {sorted(unknown_run)}")
    if "seed" in run_section:
        seed = int(run_section["seed"])
    if seed_override is not None:
        seed = seed_override

    paths = sections.pop("paths", {})
    unknown_paths = set(paths) - _PATH_KEYS
    if unknown_paths:
        raise ConfigError(f"unknown [paths] keys: {sorted(unknown_paths)}")

    built = {}
    for name, cls in _SECTION_TYPES.items():
        raw = sections.pop(name, {})
        defaults = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown [{name}] keys: {sorted(unknown)}")
        kwargs = {key: _coerce(getattr(defaults, key), val) for key, val in raw.items()}
        if "seed" in known and "seed" not in kwargs:
            kwargs["seed"] = seed
        built[name] = cls(**kwargs)
    if sections:
        raise ConfigError(f"unknown config sections: {sorted(sections)}")
    return RunConfig(seed=seed, paths=paths, **built)


def _override(cfg, **updates):
    updates = {k: v for k, v in updates.items() if v is not None}
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _resolve_path(flag_value, rc: RunConfig, path_key: str, flag_name: str) -> str:
    """Flags win; [paths] keys are the fallback."""
    if flag_value is not None:
        return flag_value
    if path_key in rc.paths:
        return rc.paths[path_key]
    raise ConfigError(f"{flag_name} is required (no [paths] {path_key} in the config)")


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    rc = load_run_config(args.config, args.seed)
    synth_cfg = _override(rc.synth, seed=args.seed).validate()
    kernel_cfg = rc.kernel.validate()
    dataio.check_kernel_fits(synth_cfg, kernel_cfg)
    out_dir = _resolve_path(args.out, rc, "dataset_dir", "--out")
    images = generate_annotated(synth_cfg, args.count)
    out = dataio.write_dataset(out_dir, images, synth_cfg=synth_cfg, kernel_cfg=kernel_cfg)
    print(f"wrote {len(images)} images to {out}")
    return 0


def cmd_shift(args) -> int:
    rc = load_run_config(args.config, args.seed)
    shift_cfg = _override(rc.shift, seed=args.seed).validate()
    images, manifest = dataio.read_dataset(args.in_dir)
    kernel_cfg = dataio.kernel_config_from_manifest(manifest) or rc.kernel.validate()
    shifted = shift_dataset(images, shift_cfg)
    carried = {k: v for k, v in manifest.items() if k.startswith("synth.")}
    out = dataio.write_dataset(
        args.out, shifted, shift_cfg=shift_cfg, kernel_cfg=kernel_cfg, extra=carried
    )
    print(f"wrote {len(shifted)} shifted images to {out}")
    return 0


def cmd_train_drm(args) -> int:
    rc = load_run_config(args.config, args.seed)
    cfg = _override(
        rc.train,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        validation_fraction=args.val_fraction,
        target_scale=args.target_scale,
    ).validate()
    dataset = _resolve_path(args.dataset, rc, "dataset_dir", "--dataset")
    images, manifest = dataio.read_dataset(dataset)
    densities = dataio.read_density_maps(dataset, int(manifest["count"]))
    params, report = train_source_drm(list(zip(images, densities)), cfg)
    out = Path(_resolve_path(args.out, rc, "checkpoint_dir", "--out"))
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save_checkpoint(
        out / "drm.npz",
        params,
        seed=cfg.seed,
        epoch=report.best_epoch,
        extra={"best_val_mse": report.best_val_mse, "target_scale": cfg.target_scale},
    )
    report.to_csv(out / "train_report.csv")
    print(f"best epoch {report.best_epoch}: validation mse {report.best_val_mse:.6g}")
    print(f"wrote {out / 'drm.npz'}")
    return 0


def cmd_adapt(args) -> int:
    rc = load_run_config(args.config, args.seed)
    cfg = _override(
        rc.adapt,
        dam_learning_rate=args.dam_lr,
        dcm_learning_rate=args.dcm_lr,
        batch_size=args.batch_size,
        crop_size=args.crop_size,
        critic_iters_per_dam_step=args.critic_iters,
        weight_clip=args.clip,
        total_dam_steps=args.steps,
        seed=args.seed,
        cache_source_features=True if args.cache_source_features else None,
    ).validate()
    drm, _ = checkpoint.load_checkpoint(args.drm)
    if not isinstance(drm, model.DrmParams):
        raise ConfigError(f"{args.drm}: adapt needs a DRM checkpoint")
    source_imgs, _ = dataio.read_dataset(_resolve_path(args.source, rc, "dataset_dir", "--source"))
    target_imgs, _ = dataio.read_dataset(args.target)
    dam, dcm, report = train_dam(drm.encoder, source_imgs, target_imgs, cfg)
    out = Path(_resolve_path(args.out, rc, "checkpoint_dir", "--out"))
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save_checkpoint(out / "dam.npz", dam, seed=cfg.seed, epoch=cfg.total_dam_steps)
    checkpoint.save_checkpoint(out / "dcm.npz", dcm, seed=cfg.seed, epoch=cfg.total_dam_steps)
    report.to_csv(out / "adapt_report.csv")
    final_gap = report.normalized_gap[-1] if report.normalized_gap else report.initial_normalized_gap
    print(
        f"initial normalized gap {report.initial_normalized_gap:.6g}, "
        f"final {final_gap:.6g}, min at step {report.min_gap_step}"
    )
    print(f"wrote {out / 'dam.npz'} and {out / 'dcm.npz'}")
    return 0


def _collect_images(path: Path) -> tuple[list[str], list[np.ndarray], list[int | None]]:
    if path.is_dir() and (path / dataio.MANIFEST_NAME).is_file():
        images, _ = dataio.read_dataset(path)
        ids = [dataio.image_id(i) for i in range(len(images))]
        return ids, [im.image for im in images], [im.count for im in images]
    if path.is_dir():
        files = sorted(path.glob("*.png"))
        if not files:
            raise FileNotFoundError(f"{path}: no PNG images found")
        return [f.stem for f in files], [dataio.load_image_png16(f) for f in files], [None] * len(files)
    if path.is_file():
        return [path.stem], [dataio.load_image_png16(path)], [None]
    raise FileNotFoundError(f"no such image or directory: {path}")


def cmd_count(args) -> int:
    encoder = checkpoint.load_encoder(args.encoder)
    decoder = checkpoint.load_decoder(args.decoder)
    ids, images, truths = _collect_images(Path(args.images))
    results = [
        evalcount.count_image(encoder, decoder, img, image_id=name, ground_truth=truth)
        for name, img, truth in zip(ids, images, truths)
    ]
    evalcount.write_counts_csv(args.out, results)
    print(f"wrote {len(results)} counts to {args.out}")
    return 0


def cmd_eval(args) -> int:
    rc = load_run_config(args.config, args.seed)
    source_drm, _ = checkpoint.load_checkpoint(args.source_drm)
    if not isinstance(source_drm, model.DrmParams):
        raise ConfigError(f"{args.source_drm}: eval needs a DRM checkpoint for the source model")
    dam = None
    if args.dam:
        dam, _ = checkpoint.load_checkpoint(args.dam)
        if not isinstance(dam, model.DamParams):
            raise ConfigError(f"{args.dam}: --dam must be a DAM checkpoint")
    annotated = None
    if args.annotated_drm:
        annotated, _ = checkpoint.load_checkpoint(args.annotated_drm)
        if not isinstance(annotated, model.DrmParams):
            raise ConfigError(f"{args.annotated_drm}: --annotated-drm must be a DRM checkpoint")
    dataset = _resolve_path(args.dataset, rc, "dataset_dir", "--dataset")
    out_dir = _resolve_path(args.out, rc, "report_dir", "--out")
    images, manifest = dataio.read_dataset(dataset)
    kernel_cfg = dataio.kernel_config_from_manifest(manifest) or rc.kernel.validate()
    comparison = evalcount.run_comparison(
        source_drm, dam, annotated, images, kernel_cfg=kernel_cfg, out_dir=out_dir
    )
    print(evalcount.format_summary_table(comparison.scores))
    print(f"wrote report to {out_dir}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densecount",
        description="Annotation-free cell counting: density regression plus domain adaptation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI run config; flags override its keys")
        p.add_argument("--seed", type=int, help="global seed override")

    p = sub.add_parser("synth", help="generate an annotated synthetic dataset")
    common(p)
    p.add_argument("--count", type=int, default=200, help="number of images (default 200)")
    p.add_argument("--out", help="output dataset directory (or [paths] dataset_dir)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("shift", help="manufacture a pseudo-target dataset from a source dataset")
    common(p)
    p.add_argument("--in", dest="in_dir", required=True, help="input dataset directory")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("train-drm", help="train the source density regressor")
    common(p)
    p.add_argument("--dataset", help="annotated dataset directory (or [paths] dataset_dir)")
    p.add_argument("--out", help="output directory (or [paths] checkpoint_dir)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--target-scale", type=float)
    p.set_defaults(func=cmd_train_drm)

    p = sub.add_parser("adapt", help="adversarially adapt the target encoder")
    common(p)
    p.add_argument("--drm", required=True, help="trained source DRM checkpoint")
    p.add_argument("--source", help="source dataset directory (or [paths] dataset_dir)")
    p.add_argument("--target", required=True, help="target dataset directory")
    p.add_argument("--out", help="output directory (or [paths] checkpoint_dir)")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--crop-size", type=int)
    p.add_argument("--critic-iters", type=int)
    p.add_argument("--dam-lr", type=float)
    p.add_argument("--dcm-lr", type=float)
    p.add_argument("--clip", type=float)
    p.add_argument("--cache-source-features", action="store_true")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("count", help="count cells in images with trained checkpoints")
    p.add_argument("--encoder", required=True, help="DRM or DAM checkpoint providing the encoder")
    p.add_argument("--decoder", required=True, help="DRM checkpoint providing the decoder")
    p.add_argument("images", help="image file, dataset directory, or directory of PNGs")
    p.add_argument("--out", required=True, help="output counts CSV")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("eval", help="score the comparison arms on an annotated dataset")
    common(p)
    p.add_argument("--source-drm", required=True, help="source DRM checkpoint")
    p.add_argument("--dam", help="adapted encoder checkpoint (adaptation arm)")
    p.add_argument("--annotated-drm", help="annotated-train DRM checkpoint")
    p.add_argument("--dataset", help="annotated evaluation dataset (or [paths] dataset_dir)")
    p.add_argument("--out", help="output report directory (or [paths] report_dir)")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        DataError,
        ShapeError,
        AnnotationError,
        PlacementError,
        TrainingDivergedError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
