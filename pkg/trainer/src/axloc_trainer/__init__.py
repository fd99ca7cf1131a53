"""Desk-scale slice-position classifier feeding the localization engine."""

__version__ = "0.1.0"

from .dataset import (
    SliceDatasetSpec,
    build_dataset,
    interpolated_positions,
    positions_to_classes,
)
from .formats import load_anchors, load_landmarks, read_volume, write_predictions_csv
from .model import SliceClassifier
from .train import (
    TrainConfig,
    TrainResult,
    export_predictions,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "__version__",
    "SliceDatasetSpec",
    "build_dataset",
    "interpolated_positions",
    "positions_to_classes",
    "load_anchors",
    "load_landmarks",
    "read_volume",
    "write_predictions_csv",
    "SliceClassifier",
    "TrainConfig",
    "TrainResult",
    "export_predictions",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
