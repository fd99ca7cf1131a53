"""Labeled slice datasets built from anchored volumes.

Labeling follows the two-anchor scheme: an annotator marks the uppermost
and lowermost visible landmarks, those two slices take the landmark
positions, and every slice in between gets the linear interpolation of
the anchor values. Positions floor to integer classes 0..99 (class c
covers [c, c+1)); only the first of every subsample_stride consecutive
slices is kept for training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .formats import VolumeAnchors, read_volume

INPUT_SIZE = 256
NUM_CLASSES = 100


@dataclass(frozen=True)
class SliceDatasetSpec:
    anchors: tuple[VolumeAnchors, ...]
    subsample_stride: int = 3

    def __post_init__(self):
        if self.subsample_stride < 1:
            raise ValueError(f"subsample_stride must be >= 1, got {self.subsample_stride}")


def interpolated_positions(upper_index, upper_position, lower_index,
                           lower_position, num_slices) -> np.ndarray:
    """Per-slice positions through the two anchors, clamped to [0, 100]."""
    if not 0 <= upper_index < lower_index < num_slices:
        raise ValueError(
            f"anchors must satisfy 0 <= upper ({upper_index}) < lower "
            f"({lower_index}) < num_slices ({num_slices})"
        )
    slope = (lower_position - upper_position) / (lower_index - upper_index)
    positions = upper_position + slope * (np.arange(num_slices) - upper_index)
    positions[upper_index] = upper_position
    positions[lower_index] = lower_position
    return np.clip(positions, 0.0, 100.0)


def positions_to_classes(positions) -> np.ndarray:
    """Floor to the 100-way class grid; position 100.0 belongs to class 99."""
    return np.minimum(np.floor(np.asarray(positions)), NUM_CLASSES - 1).astype(np.int64)


def resize_slices(voxels: np.ndarray) -> torch.Tensor:
    """HU slices to float32 [N, 1, 256, 256] via bilinear resize, unscaled."""
    stack = torch.from_numpy(np.ascontiguousarray(voxels)).float().unsqueeze(1)
    if stack.shape[-2:] != (INPUT_SIZE, INPUT_SIZE):
        stack = F.interpolate(stack, size=(INPUT_SIZE, INPUT_SIZE),
                              mode="bilinear", align_corners=False)
    return stack


def build_dataset(spec: SliceDatasetSpec) -> tuple[torch.Tensor, torch.Tensor]:
    """(images, labels) over every retained slice of every anchored volume."""
    images, labels = [], []
    for anchor in spec.anchors:
        volume = read_volume(anchor.volume_path)
        positions = interpolated_positions(
            anchor.upper_index, anchor.upper_position,
            anchor.lower_index, anchor.lower_position, volume.num_slices)
        keep = np.arange(0, volume.num_slices, spec.subsample_stride)
        images.append(resize_slices(volume.voxels[keep]))
        labels.append(torch.from_numpy(positions_to_classes(positions[keep])))
    if not images:
        raise ValueError("dataset spec has no volumes")
    return torch.cat(images), torch.cat(labels)
