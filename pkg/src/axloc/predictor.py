"""Per-slice position predictors: contract, synthetic oracle, file-backed.

Every predictor returns a clamped position in [0, 100] for a slice index
and is deterministic: the synthetic oracle derives its randomness by
hashing (seed, slice_index), so results never depend on query order or
batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coords import POSITION_MAX, POSITION_MIN
from .volume_io import PredictionFile

__all__ = [
    "SlicePrediction",
    "NoiseModel",
    "MissingPredictionError",
    "Predictor",
    "SyntheticOracle",
    "FilePredictor",
    "CountingPredictor",
    "make_synthetic_oracle",
    "make_file_predictor",
    "inlier_noise",
    "outlier_mask",
    "outlier_positions",
]

# Laplace scale whose absolute draws have median exactly 1.0 units.
DEFAULT_INLIER_SCALE = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class SlicePrediction:
    """A (slice index, predicted normalized position) pair."""

    slice_index: int
    position: float

    def __post_init__(self):
        if not math.isfinite(self.position):
            raise ValueError(f"position must be finite, got {self.position}")
        if not POSITION_MIN <= self.position <= POSITION_MAX:
            raise ValueError(f"position {self.position} outside [0, 100]")


@dataclass(frozen=True)
class NoiseModel:
    """Synthetic predictor error model.

    Inlier error is Laplace with scale sigma_units, so the absolute
    inlier error has median sigma_units*ln(2) and mean sigma_units; the
    default scale 1/ln(2) pins the median at 1.0 units and the mean near
    1.44. With probability outlier_rate the prediction is instead drawn
    uniformly over [0, 100].
    """

    sigma_units: float = DEFAULT_INLIER_SCALE
    outlier_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.sigma_units) and self.sigma_units >= 0):
            raise ValueError(f"sigma_units must be finite and >= 0, got {self.sigma_units}")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError(f"outlier_rate must be in [0, 1], got {self.outlier_rate}")


class MissingPredictionError(LookupError):
    """A file-backed predictor was queried for an index it does not cover."""

    def __init__(self, slice_index: int):
        super().__init__(f"no prediction for slice index {slice_index}")
        self.slice_index = slice_index


_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _fmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; full-avalanche 64-bit mix."""
    x = x.astype(np.uint64)
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK
    return x ^ (x >> np.uint64(31))


def _uniforms(seed: int, indices: np.ndarray, stream: int) -> np.ndarray:
    """Per-(seed, index) uniforms in [0, 1), one independent stream each."""
    idx = np.asarray(indices, dtype=np.uint64)
    # 3*index+stream is injective over (index, stream in {0,1,2}).
    words = _fmix64(idx * np.uint64(3) + np.uint64(stream))
    seed_word = _fmix64(np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    h = _fmix64(words ^ seed_word)
    return (h >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def inlier_noise(noise: NoiseModel, indices) -> np.ndarray:
    """Seeded Laplace inlier errors for the given slice indices."""
    u = _uniforms(noise.seed, np.asarray(indices), stream=0)
    v = u - 0.5
    # Inverse CDF; the argument of log is kept > 0 against the u == 0 edge.
    return -noise.sigma_units * np.sign(v) * np.log(np.maximum(1.0 - 2.0 * np.abs(v), 2.0**-60))


def outlier_mask(noise: NoiseModel, indices) -> np.ndarray:
    """Seeded boolean mask of which indices draw an outlier."""
    return _uniforms(noise.seed, np.asarray(indices), stream=1) < noise.outlier_rate


def outlier_positions(noise: NoiseModel, indices) -> np.ndarray:
    """Seeded uniform outlier positions over [0, 100]."""
    return 100.0 * _uniforms(noise.seed, np.asarray(indices), stream=2)


class Predictor:
    """Contract: deterministic per-slice positions clamped to [0, 100]."""

    def predict(self, volume, slice_index: int) -> SlicePrediction:
        return self.predict_batch(volume, [slice_index])[0]

    def predict_batch(self, volume, indices) -> list[SlicePrediction]:
        indices = [int(i) for i in indices]
        for i in indices:
            if not 0 <= i < volume.meta.num_slices:
                raise IndexError(
                    f"slice index {i} out of range for {volume.meta.num_slices} slices"
                )
        positions = self._positions(np.asarray(indices, dtype=np.int64))
        return [SlicePrediction(i, float(p)) for i, p in zip(indices, positions)]

    def _positions(self, indices: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class SyntheticOracle(Predictor):
    """Noisy oracle around a known ground truth; stand-in for a classifier.

    Truth is either a line (slope, intercept) over slice index or an
    explicit per-slice position table.
    """

    def __init__(self, noise: NoiseModel, *, slope: float | None = None,
                 intercept: float | None = None, table=None):
        if table is None and (slope is None or intercept is None):
            raise ValueError("need either slope+intercept or a truth table")
        self.noise = noise
        self.slope = slope
        self.intercept = intercept
        self.table = None if table is None else np.asarray(table, dtype=np.float64)

    def truth(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if self.table is not None:
            return self.table[idx]
        return self.slope * idx.astype(np.float64) + self.intercept

    def _positions(self, indices: np.ndarray) -> np.ndarray:
        clean = self.truth(indices) + inlier_noise(self.noise, indices)
        out = np.where(outlier_mask(self.noise, indices),
                       outlier_positions(self.noise, indices), clean)
        return np.clip(out, POSITION_MIN, POSITION_MAX)


class FilePredictor(Predictor):
    """Pure lookup over a loaded predictions file."""

    def __init__(self, predictions: PredictionFile):
        self._table = predictions.to_dict()

    def _positions(self, indices: np.ndarray) -> np.ndarray:
        out = np.empty(len(indices), dtype=np.float64)
        for k, i in enumerate(indices):
            try:
                out[k] = self._table[int(i)]
            except KeyError:
                raise MissingPredictionError(int(i)) from None
        return np.clip(out, POSITION_MIN, POSITION_MAX)


class CountingPredictor(Predictor):
    """Wrapper that counts per-slice queries; used to assert scan-size invariance."""

    def __init__(self, inner: Predictor):
        self.inner = inner
        self.calls = 0

    def predict_batch(self, volume, indices) -> list[SlicePrediction]:
        out = self.inner.predict_batch(volume, indices)
        self.calls += len(out)
        return out


def make_synthetic_oracle(slope: float, intercept: float,
                          noise: NoiseModel = NoiseModel()) -> SyntheticOracle:
    """Oracle around the truth line position(i) = slope*i + intercept."""
    return SyntheticOracle(noise, slope=float(slope), intercept=float(intercept))


def make_file_predictor(predictions: PredictionFile) -> FilePredictor:
    return FilePredictor(predictions)
