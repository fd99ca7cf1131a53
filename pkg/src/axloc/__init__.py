"""Axial CT scan localization: map every slice to a normalized body position."""

__version__ = "0.1.0"

from .coords import (
    BodyScale,
    DEFAULT_LANDMARKS,
    LandmarkTable,
    UnknownLandmarkError,
    interpolate_labels,
    landmark_position,
    nearest_landmarks,
    units_to_cm,
)
from .fitter import (
    LinearMapping,
    NoConsensusError,
    RansacConfig,
    SamplerConfig,
    apply_mapping,
    fit_mapping,
    localize_scan,
    region_for_interval,
    sample_indices,
)
from .gatekeeper import GateConfig, ReliabilityVerdict, evaluate, yield_report
from .predictor import (
    FilePredictor,
    NoiseModel,
    SlicePrediction,
    SyntheticOracle,
    make_file_predictor,
    make_synthetic_oracle,
)
from .volume_io import (
    PredictionFile,
    Volume,
    VolumeMeta,
    load_predictions,
    load_volume,
    save_predictions,
    save_volume,
)

__all__ = [
    "__version__",
    "BodyScale",
    "DEFAULT_LANDMARKS",
    "LandmarkTable",
    "UnknownLandmarkError",
    "interpolate_labels",
    "landmark_position",
    "nearest_landmarks",
    "units_to_cm",
    "LinearMapping",
    "NoConsensusError",
    "RansacConfig",
    "SamplerConfig",
    "apply_mapping",
    "fit_mapping",
    "localize_scan",
    "region_for_interval",
    "sample_indices",
    "GateConfig",
    "ReliabilityVerdict",
    "evaluate",
    "yield_report",
    "FilePredictor",
    "NoiseModel",
    "SlicePrediction",
    "SyntheticOracle",
    "make_file_predictor",
    "make_synthetic_oracle",
    "PredictionFile",
    "Volume",
    "VolumeMeta",
    "load_predictions",
    "load_volume",
    "save_predictions",
    "save_volume",
]
