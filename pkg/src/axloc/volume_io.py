"""Portable volume container (AXV1) and prediction-file formats.

AXV1 layout, in order:

    bytes 0..3   magic "AXV1"
    bytes 4..7   header length, unsigned 32-bit little-endian
    header       UTF-8 JSON: {"dims": [z, y, x],
                              "spacing_between_slices_mm": float,
                              "pixel_spacing_mm": [row, col],
                              "orientation": str}
    payload      z*y*x signed 16-bit little-endian Hounsfield values,
                 slice-major, row-major

Predictions travel as CSV with the header line "slice_index,position".
See docs/formats.md for worked examples.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MAGIC",
    "ORIENTATIONS",
    "VolumeFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "LengthMismatchError",
    "HeaderError",
    "PredictionFormatError",
    "VolumeMeta",
    "Volume",
    "PredictionFile",
    "load_volume",
    "save_volume",
    "load_predictions",
    "save_predictions",
]

MAGIC = b"AXV1"
ORIENTATIONS = ("head_first", "feet_first", "unknown")


class VolumeFormatError(ValueError):
    """An AXV1 file violates the container contract."""


class BadMagicError(VolumeFormatError):
    pass


class TruncatedPayloadError(VolumeFormatError):
    pass


class LengthMismatchError(VolumeFormatError):
    """Payload length disagrees with the header dims."""


class HeaderError(VolumeFormatError):
    """A header field is missing or invalid; names the field."""

    def __init__(self, fieldname: str, message: str):
        super().__init__(f"header field {fieldname!r}: {message}")
        self.field = fieldname


class PredictionFormatError(ValueError):
    """A predictions CSV violates the format; carries the 1-based line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _check_spacing(name: str, value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise HeaderError(name, f"not a number: {value!r}") from None
    if not math.isfinite(value) or value <= 0:
        raise HeaderError(name, f"must be finite and positive, got {value}")
    return value


@dataclass(frozen=True)
class VolumeMeta:
    """Acquisition metadata carried alongside the voxel grid.

    Spacings may be None for sources that do not provide them (e.g.
    service requests); AXV1 files always carry both.
    """

    num_slices: int
    rows: int
    cols: int
    spacing_between_slices_mm: float | None = None
    pixel_spacing_mm: tuple[float, float] | None = None
    orientation: str = "unknown"

    def __post_init__(self):
        if self.num_slices < 1:
            raise ValueError(f"num_slices must be >= 1, got {self.num_slices}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"rows/cols must be >= 1, got {self.rows}x{self.cols}")
        if self.spacing_between_slices_mm is not None:
            object.__setattr__(
                self,
                "spacing_between_slices_mm",
                _check_spacing("spacing_between_slices_mm", self.spacing_between_slices_mm),
            )
        if self.pixel_spacing_mm is not None:
            r, c = self.pixel_spacing_mm
            object.__setattr__(
                self,
                "pixel_spacing_mm",
                (_check_spacing("pixel_spacing_mm", r), _check_spacing("pixel_spacing_mm", c)),
            )
        if self.orientation not in ORIENTATIONS:
            raise ValueError(
                f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}"
            )


@dataclass(frozen=True)
class Volume:
    """Slice stack of Hounsfield values plus its metadata."""

    meta: VolumeMeta
    voxels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.voxels)
        if v.dtype != np.int16:
            raise ValueError(f"voxels must be int16, got {v.dtype}")
        expected = (self.meta.num_slices, self.meta.rows, self.meta.cols)
        if v.shape != expected:
            raise ValueError(f"voxel shape {v.shape} does not match meta {expected}")
        object.__setattr__(self, "voxels", v)

    @property
    def num_slices(self) -> int:
        return self.meta.num_slices


@dataclass(frozen=True)
class PredictionFile:
    """Per-slice position records, unique indices sorted ascending."""

    records: tuple[tuple[int, float], ...] = field(default=())

    def __post_init__(self):
        records = tuple((int(i), float(p)) for i, p in self.records)
        object.__setattr__(self, "records", records)
        indices = [i for i, _ in records]
        if len(set(indices)) != len(indices):
            raise ValueError("slice_index values must be unique")
        if indices != sorted(indices):
            raise ValueError("records must be sorted by slice_index")

    def to_dict(self) -> dict[int, float]:
        return dict(self.records)


def _header_dict(meta: VolumeMeta) -> dict:
    if meta.spacing_between_slices_mm is None or meta.pixel_spacing_mm is None:
        raise HeaderError(
            "spacing_between_slices_mm"
            if meta.spacing_between_slices_mm is None
            else "pixel_spacing_mm",
            "required to write an AXV1 file",
        )
    return {
        "dims": [meta.num_slices, meta.rows, meta.cols],
        "spacing_between_slices_mm": meta.spacing_between_slices_mm,
        "pixel_spacing_mm": list(meta.pixel_spacing_mm),
        "orientation": meta.orientation,
    }


def save_volume(volume: Volume, path) -> None:
    """Write an AXV1 file; load_volume reproduces it bit-exactly."""
    header = json.dumps(_header_dict(volume.meta), sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(volume.voxels, dtype="<i2").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(payload)


def _parse_header(raw: bytes) -> VolumeMeta:
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError("json", f"undecodable header: {exc}") from None
    if not isinstance(header, dict):
        raise HeaderError("json", "header must be a JSON object")

    dims = header.get("dims")
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or not all(isinstance(d, int) and not isinstance(d, bool) for d in dims)
    ):
        raise HeaderError("dims", f"expected [z, y, x] integers, got {dims!r}")
    z, y, x = dims
    if z < 1 or y < 1 or x < 1:
        raise HeaderError("dims", f"dimensions must be >= 1, got {dims}")

    if "spacing_between_slices_mm" not in header:
        raise HeaderError("spacing_between_slices_mm", "missing")
    spacing = _check_spacing(
        "spacing_between_slices_mm", header["spacing_between_slices_mm"]
    )

    px = header.get("pixel_spacing_mm")
    if not isinstance(px, list) or len(px) != 2:
        raise HeaderError("pixel_spacing_mm", f"expected [row, col], got {px!r}")
    pixel_spacing = (
        _check_spacing("pixel_spacing_mm", px[0]),
        _check_spacing("pixel_spacing_mm", px[1]),
    )

    orientation = header.get("orientation")
    if orientation not in ORIENTATIONS:
        raise HeaderError("orientation", f"must be one of {ORIENTATIONS}, got {orientation!r}")

    return VolumeMeta(
        num_slices=z,
        rows=y,
        cols=x,
        spacing_between_slices_mm=spacing,
        pixel_spacing_mm=pixel_spacing,
        orientation=orientation,
    )


def load_volume(path) -> Volume:
    """Read and fully validate an AXV1 file."""
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < 8 or data[:4] != MAGIC:
        raise BadMagicError(f"not an AXV1 file: {path}")
    header_len = int.from_bytes(data[4:8], "little")
    if len(data) < 8 + header_len:
        raise TruncatedPayloadError(f"file ends inside the header: {path}")
    meta = _parse_header(data[8 : 8 + header_len])

    payload = data[8 + header_len :]
    expected = meta.num_slices * meta.rows * meta.cols * 2
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload is {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise LengthMismatchError(
            f"payload is {len(payload)} bytes, header promises {expected}"
        )

    voxels = np.frombuffer(payload, dtype="<i2").reshape(
        meta.num_slices, meta.rows, meta.cols
    )
    return Volume(meta=meta, voxels=voxels.astype(np.int16, copy=False))


def load_predictions(path) -> PredictionFile:
    """Parse a predictions CSV, validating header, numbers and uniqueness."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)

    if not rows or [c.strip() for c in rows[0]] != ["slice_index", "position"]:
        raise PredictionFormatError(1, 'missing header "slice_index,position"')

    records: list[tuple[int, float]] = []
    seen: set[int] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise PredictionFormatError(lineno, f"expected 2 fields, got {len(row)}")
        try:
            index = int(row[0])
        except ValueError:
            raise PredictionFormatError(lineno, f"non-numeric slice_index {row[0]!r}") from None
        try:
            position = float(row[1])
        except ValueError:
            raise PredictionFormatError(lineno, f"non-numeric position {row[1]!r}") from None
        if not math.isfinite(position):
            raise PredictionFormatError(lineno, f"position {position} is not finite")
        if index < 0:
            raise PredictionFormatError(lineno, f"negative slice_index {index}")
        if index in seen:
            raise PredictionFormatError(lineno, f"duplicate slice_index {index}")
        seen.add(index)
        records.append((index, position))

    records.sort(key=lambda r: r[0])
    return PredictionFile(tuple(records))


def save_predictions(records, path, digits: int = 6) -> None:
    """Write (slice_index, position) pairs as a predictions CSV."""
    pairs = sorted((int(i), float(p)) for i, p in records)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("slice_index,position\n")
        for index, position in pairs:
            fh.write(f"{index},{position:.{digits}f}\n")
