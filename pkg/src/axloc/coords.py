"""Normalized 1-D body coordinate system and anatomical landmark table.

Positions are scalars in [0, 100]: 0 at the superior aspect of the skull,
100 at the sole of the foot. One unit corresponds to height_cm / 100
centimeters (1.7 cm for the default 170 cm adult).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

__all__ = [
    "POSITION_MIN",
    "POSITION_MAX",
    "UnknownLandmarkError",
    "LandmarkTable",
    "BodyScale",
    "DEFAULT_LANDMARKS",
    "clamp_position",
    "landmark_position",
    "nearest_landmarks",
    "interpolate_labels",
    "units_to_cm",
]

POSITION_MIN = 0.0
POSITION_MAX = 100.0

# Canonical landmarks, superior to inferior. Identifiers are stable keys
# used in files and APIs; positions are normalized body units.
_DEFAULT_ENTRIES = (
    ("superior_skull", 0.0),
    ("inferior_cerebellum", 10.9),
    ("hyoid_bone", 12.6),
    ("superior_sternum", 18.9),
    ("carina", 21.1),
    ("inferior_heart", 28.0),
    ("lower_twelfth_rib", 36.6),
    ("superior_ilium", 40.0),
    ("lesser_trochanter", 51.4),
    ("patellas", 71.4),
    ("sole_of_foot", 100.0),
)

LANDMARK_TABLE_VERSION = "1"


class UnknownLandmarkError(KeyError):
    """Lookup of a landmark id that is not in the table."""

    def __init__(self, landmark_id: str):
        super().__init__(landmark_id)
        self.landmark_id = landmark_id

    def __str__(self) -> str:
        return f"unknown landmark {self.landmark_id!r}"


def clamp_position(value: float) -> float:
    """Clamp a raw position to the valid [0, 100] body range."""
    if value < POSITION_MIN:
        return POSITION_MIN
    if value > POSITION_MAX:
        return POSITION_MAX
    return value


@dataclass(frozen=True)
class LandmarkTable:
    """Ordered (landmark_id, position) pairs spanning the whole body.

    Exactly 11 entries, unique ids, positions strictly increasing from
    0.0 to 100.0.
    """

    entries: tuple[tuple[str, float], ...] = field(default=_DEFAULT_ENTRIES)

    def __post_init__(self):
        entries = tuple((str(i), float(p)) for i, p in self.entries)
        object.__setattr__(self, "entries", entries)
        if len(entries) != 11:
            raise ValueError(f"landmark table needs exactly 11 entries, got {len(entries)}")
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("landmark ids must be unique")
        positions = [p for _, p in entries]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("landmark positions must be strictly increasing")
        if positions[0] != POSITION_MIN or positions[-1] != POSITION_MAX:
            raise ValueError("landmark table must span 0.0 to 100.0")

    def position_of(self, landmark_id: str) -> float:
        for lid, pos in self.entries:
            if lid == landmark_id:
                return pos
        raise UnknownLandmarkError(landmark_id)

    def ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.entries)

    def nearest(self, position: float) -> tuple[str, str]:
        """Closest landmark at-or-below and at-or-above a position.

        An exact table hit returns the same landmark on both sides.
        """
        if not POSITION_MIN <= position <= POSITION_MAX:
            raise ValueError(f"position {position} outside [0, 100]")
        below = None
        above = None
        for lid, pos in self.entries:
            if pos <= position:
                below = lid
            if pos >= position and above is None:
                above = lid
        return below, above

    def to_json(self) -> str:
        return json.dumps(
            [{"id": lid, "position": pos} for lid, pos in self.entries],
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "LandmarkTable":
        raw = json.loads(text)
        return cls(tuple((item["id"], item["position"]) for item in raw))

    @classmethod
    def load(cls, path) -> "LandmarkTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


DEFAULT_LANDMARKS = LandmarkTable()


@dataclass(frozen=True)
class BodyScale:
    """Physical body height used to convert normalized units to cm."""

    height_cm: float = 170.0

    def __post_init__(self):
        if not self.height_cm > 0:
            raise ValueError(f"height_cm must be positive, got {self.height_cm}")

    @property
    def cm_per_unit(self) -> float:
        return self.height_cm / 100.0


def landmark_position(landmark_id: str, table: LandmarkTable = DEFAULT_LANDMARKS) -> float:
    """Normalized position of a canonical landmark."""
    return table.position_of(landmark_id)


def nearest_landmarks(
    position: float, table: LandmarkTable = DEFAULT_LANDMARKS
) -> tuple[str, str]:
    """Bracketing landmarks (below, above) for an in-range position."""
    return table.nearest(position)


def interpolate_labels(
    upper: tuple[int, float], lower: tuple[int, float], n_slices: int
) -> list[float]:
    """Per-slice positions from two anchor (slice_index, position) pairs.

    Slices between the anchors lie on the straight line through them;
    slices outside are extrapolated on the same line and clamped to
    [0, 100]. The anchor slices reproduce the anchor positions exactly.
    """
    upper_idx, upper_pos = int(upper[0]), float(upper[1])
    lower_idx, lower_pos = int(lower[0]), float(lower[1])
    if n_slices < 1:
        raise ValueError(f"n_slices must be >= 1, got {n_slices}")
    if upper_idx == lower_idx:
        raise ValueError("anchor slice indices must differ")
    if not (0 <= upper_idx < lower_idx < n_slices):
        raise ValueError(
            f"anchors must satisfy 0 <= upper ({upper_idx}) < lower ({lower_idx}) "
            f"< n_slices ({n_slices})"
        )
    for pos in (upper_pos, lower_pos):
        if not math.isfinite(pos):
            raise ValueError(f"anchor position {pos} is not finite")

    slope = (lower_pos - upper_pos) / (lower_idx - upper_idx)
    labels = [clamp_position(upper_pos + slope * (i - upper_idx)) for i in range(n_slices)]
    # Anchors are authoritative; do not let rounding touch them.
    labels[upper_idx] = upper_pos
    labels[lower_idx] = lower_pos
    return labels


def units_to_cm(delta: float, scale: BodyScale = BodyScale()) -> float:
    """Convert a distance in normalized units to centimeters."""
    return delta * scale.cm_per_unit
