"""Wire formats shared with the localization engine.

The trainer talks to the engine through files only: AXV1 volumes in,
predictions CSV out, plus the landmark-table and anchor JSON documents.
Format details are documented in the engine's docs/formats.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

MAGIC = b"AXV1"

# Default landmark table, identical to the engine's built-in (version 1).
DEFAULT_LANDMARKS = {
    "superior_skull": 0.0,
    "inferior_cerebellum": 10.9,
    "hyoid_bone": 12.6,
    "superior_sternum": 18.9,
    "carina": 21.1,
    "inferior_heart": 28.0,
    "lower_twelfth_rib": 36.6,
    "superior_ilium": 40.0,
    "lesser_trochanter": 51.4,
    "patellas": 71.4,
    "sole_of_foot": 100.0,
}


@dataclass(frozen=True)
class VolumeData:
    voxels: np.ndarray  # int16, [slice][row][col]
    spacing_between_slices_mm: float
    orientation: str

    @property
    def num_slices(self) -> int:
        return self.voxels.shape[0]


def read_volume(path) -> VolumeData:
    """Minimal AXV1 reader; validates magic, header and payload length."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:4] != MAGIC:
        raise ValueError(f"not an AXV1 file: {path}")
    header_len = int.from_bytes(data[4:8], "little")
    header = json.loads(data[8:8 + header_len].decode("utf-8"))
    z, y, x = header["dims"]
    payload = data[8 + header_len:]
    if len(payload) != z * y * x * 2:
        raise ValueError(f"payload length {len(payload)} does not match dims {header['dims']}")
    # copy out of the read-only buffer so torch can wrap the array
    voxels = np.frombuffer(payload, dtype="<i2").reshape(z, y, x).copy()
    return VolumeData(
        voxels=voxels,
        spacing_between_slices_mm=float(header["spacing_between_slices_mm"]),
        orientation=header["orientation"],
    )


def write_predictions_csv(positions, path) -> None:
    """One row per slice in the engine's predictions CSV format."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("slice_index,position\n")
        for index, position in enumerate(positions):
            fh.write(f"{index},{float(position):.6f}\n")


def load_landmarks(path=None) -> dict[str, float]:
    """Landmark table as id -> position; engine JSON array format."""
    if path is None:
        return dict(DEFAULT_LANDMARKS)
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return {item["id"]: float(item["position"]) for item in raw}


@dataclass(frozen=True)
class VolumeAnchors:
    """Two annotated landmark slices that label a whole volume."""

    volume_path: str
    upper_index: int
    upper_position: float
    lower_index: int
    lower_position: float


def load_anchors(path, landmarks: dict[str, float] | None = None) -> list[VolumeAnchors]:
    """Anchor documents: [{volume, upper: {index, landmark}, lower: {...}}, ...]."""
    table = landmarks if landmarks is not None else DEFAULT_LANDMARKS
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = [raw]
    anchors = []
    for item in raw:
        upper, lower = item["upper"], item["lower"]
        anchors.append(VolumeAnchors(
            volume_path=item["volume"],
            upper_index=int(upper["index"]),
            upper_position=table[upper["landmark"]],
            lower_index=int(lower["index"]),
            lower_position=table[lower["landmark"]],
        ))
    return anchors
