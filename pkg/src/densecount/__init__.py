"""Annotation-free cell counting by density regression with adversarial
domain adaptation.

Pipeline: generate annotated synthetic images (synthgen), rasterize
centroids into density maps (densitymap), train the source regressor
(source_training), adapt a target encoder against a Wasserstein-style
critic (adaptation), and count by integrating estimated density maps
(evalcount). The cli module ties the stages into reproducible runs.
"""

from .adaptation import AdaptConfig, AdaptReport, critic_losses, train_dam
from .densitymap import (
    KernelConfig,
    build_density_map,
    integrate_count,
    load_dmap,
    make_kernel,
    round_count,
    save_dmap,
)
from .evalcount import (
    ArmScores,
    ComparisonResult,
    CountResult,
    count_image,
    run_comparison,
    score_arm,
)
from .model import (
    DamParams,
    DcmParams,
    DrmParams,
    critic_forward,
    decode,
    drm_forward,
    encode,
    init_dam,
    init_dcm,
    init_drm,
)
from .source_training import TrainConfig, TrainReport, mse_loss, train_source_drm
from .synthgen import (
    AnnotatedImage,
    ShiftConfig,
    SynthConfig,
    apply_shift,
    generate_annotated,
    shift_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig",
    "AdaptReport",
    "AnnotatedImage",
    "ArmScores",
    "ComparisonResult",
    "CountResult",
    "DamParams",
    "DcmParams",
    "DrmParams",
    "KernelConfig",
    "ShiftConfig",
    "SynthConfig",
    "TrainConfig",
    "TrainReport",
    "apply_shift",
    "build_density_map",
    "count_image",
    "critic_forward",
    "critic_losses",
    "decode",
    "drm_forward",
    "encode",
    "generate_annotated",
    "init_dam",
    "init_dcm",
    "init_drm",
    "integrate_count",
    "load_dmap",
    "make_kernel",
    "mse_loss",
    "round_count",
    "run_comparison",
    "save_dmap",
    "score_arm",
    "shift_dataset",
    "train_dam",
    "train_source_drm",
]
