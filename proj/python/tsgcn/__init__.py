"""Three-stream GSTCN skeleton action classifier."""

from ._core import (
    ConfigError,
    IngestError,
    ModelConfig,
    NumericError,
    ShapeError,
    ThreeStreamModel,
    compute_metrics,
    compute_motion,
    evaluate,
    gradcheck,
    load_model,
    normalized_adjacency,
    septcn_flops,
    synth_clips,
    welch_t_test,
)

__all__ = [
    "ConfigError",
    "IngestError",
    "ModelConfig",
    "NumericError",
    "ShapeError",
    "ThreeStreamModel",
    "compute_metrics",
    "compute_motion",
    "evaluate",
    "gradcheck",
    "load_model",
    "normalized_adjacency",
    "septcn_flops",
    "synth_clips",
    "welch_t_test",
]
