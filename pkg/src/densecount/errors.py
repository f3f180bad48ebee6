"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates its documented constraints."""


class ShapeError(ValueError):
    """An array has a shape the receiving operation cannot accept."""


class DataError(ValueError):
    """Inconsistent training/evaluation data (shape mismatch, empty batch)."""


class AnnotationError(ValueError):
    """A centroid annotation falls outside its image."""


class PlacementError(RuntimeError):
    """Cell placement cannot satisfy the configured spacing constraints."""


class TrainingDivergedError(RuntimeError):
    """A training loss became non-finite."""
