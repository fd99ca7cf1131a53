"""Robust linear slice-index to position model.

A scan is localized by uniformly sampling a fixed number of slices,
asking a predictor for their positions, fitting index -> position with
RANSAC over two-point candidate lines, refitting the winner by least
squares on its inliers, and applying the line to every slice. The fit
score is the median absolute residual of the FULL sample (inliers and
outliers alike) against the final line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coords import POSITION_MAX, POSITION_MIN
from .predictor import Predictor, SlicePrediction

__all__ = [
    "SamplerConfig",
    "RansacConfig",
    "LinearMapping",
    "DegenerateSampleError",
    "NoConsensusError",
    "DegenerateMappingError",
    "sample_indices",
    "fit_mapping",
    "apply_mapping",
    "localize_scan",
    "region_for_interval",
]


class DegenerateSampleError(ValueError):
    """Fewer than 2 distinct slice indices; no line can be proposed."""


class NoConsensusError(RuntimeError):
    """RANSAC found no candidate with enough inliers.

    Indicates a possible problem with the localization or the scan;
    callers report it as exclusion rule R0.
    """

    def __init__(self, best_inliers: int, min_inliers: int):
        super().__init__(
            f"best candidate has {best_inliers} inliers, need {min_inliers}"
        )
        self.best_inliers = best_inliers
        self.min_inliers = min_inliers


class DegenerateMappingError(ValueError):
    """Mapping slope too close to zero to invert."""


@dataclass(frozen=True)
class SamplerConfig:
    """How many slices to localize directly, independent of scan size."""

    sample_count: int = 30

    def __post_init__(self):
        if self.sample_count < 2:
            raise ValueError(f"sample_count must be >= 2, got {self.sample_count}")


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 256
    inlier_threshold_units: float = 2.0
    min_inliers: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.min_inliers < 2:
            raise ValueError(f"min_inliers must be >= 2, got {self.min_inliers}")
        if not (math.isfinite(self.inlier_threshold_units) and self.inlier_threshold_units > 0):
            raise ValueError(
                f"inlier_threshold_units must be finite and positive, "
                f"got {self.inlier_threshold_units}"
            )


@dataclass(frozen=True)
class LinearMapping:
    """index -> position line with its fit diagnostics.

    fit_score is the median absolute residual over the complete fitted
    sample; inlier_mask marks the winning consensus set, aligned with
    sample order.
    """

    slope: float
    intercept: float
    fit_score: float
    inlier_mask: tuple[bool, ...]
    sample: tuple[SlicePrediction, ...]

    @property
    def inlier_count(self) -> int:
        return sum(self.inlier_mask)

    def __call__(self, slice_index) -> float:
        return apply_mapping(self, slice_index)


def sample_indices(num_slices: int, config: SamplerConfig = SamplerConfig()) -> list[int]:
    """Uniformly spread sample of slice indices, first and last included.

    Scans with at most sample_count slices are returned whole. Larger
    scans get sample_count distinct indices round(j*(n-1)/(k-1)); the
    spacing exceeds 1 there, so rounding cannot collide.
    """
    if num_slices < 1:
        raise ValueError(f"num_slices must be >= 1, got {num_slices}")
    k = config.sample_count
    if num_slices <= k:
        return list(range(num_slices))
    step = (num_slices - 1) / (k - 1)
    return [int(math.floor(j * step + 0.5)) for j in range(k)]


def _sample_arrays(sample) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([p.slice_index for p in sample], dtype=np.float64)
    y = np.array([p.position for p in sample], dtype=np.float64)
    return x, y


def fit_mapping(sample, config: RansacConfig = RansacConfig()) -> LinearMapping:
    """RANSAC line fit over (slice_index, position) samples.

    Two-point candidates are drawn without replacement for each
    iteration; the winner maximizes inlier count, ties broken by smaller
    sum of inlier absolute residuals, then by earlier iteration. The
    final line is an ordinary least-squares refit on the winning inlier
    set. Deterministic for a fixed config.seed.
    """
    sample = tuple(sample)
    x, y = _sample_arrays(sample)
    n = len(sample)
    if len(np.unique(x)) < 2:
        raise DegenerateSampleError(
            f"need >= 2 distinct slice indices, got {len(np.unique(x))}"
        )

    rng = np.random.default_rng(config.seed)
    iters = config.iterations
    # Distinct pair per iteration: second draw skips over the first.
    first = rng.integers(0, n, size=iters)
    second = rng.integers(0, n - 1, size=iters)
    second = second + (second >= first)

    x1, x2 = x[first], x[second]
    y1, y2 = y[first], y[second]
    dx = x2 - x1
    usable = dx != 0.0  # vertical candidates are skipped, not fatal
    safe_dx = np.where(usable, dx, 1.0)
    slopes = (y2 - y1) / safe_dx
    intercepts = y1 - slopes * x1

    resid = np.abs(y[None, :] - (slopes[:, None] * x[None, :] + intercepts[:, None]))
    inlier = resid <= config.inlier_threshold_units
    counts = inlier.sum(axis=1)
    counts[~usable] = -1
    inlier_resid_sums = np.where(inlier, resid, 0.0).sum(axis=1)

    # Primary: most inliers; then smallest inlier residual sum; then
    # earliest iteration. lexsort orders by the last key first.
    best = int(np.lexsort((np.arange(iters), inlier_resid_sums, -counts))[0])
    best_count = int(counts[best])
    if best_count < config.min_inliers:
        raise NoConsensusError(best_inliers=max(best_count, 0), min_inliers=config.min_inliers)

    mask = inlier[best]
    # The least-squares refit is supported on a band twice the consensus
    # threshold. A winning candidate passes exactly through two sample
    # points and tilts within the band it was scored on; refitting only
    # its own consensus set inherits that tilt (the set was selected to
    # agree with it). The wider band recovers nearly every true inlier,
    # making the refit insensitive to which near-tied candidate won.
    refit_mask = resid[best] <= 2.0 * config.inlier_threshold_units
    slope, intercept = np.polyfit(x[refit_mask], y[refit_mask], 1)
    fit_score = float(np.median(np.abs(y - (slope * x + intercept))))

    return LinearMapping(
        slope=float(slope),
        intercept=float(intercept),
        fit_score=fit_score,
        inlier_mask=tuple(bool(b) for b in mask),
        sample=sample,
    )


def apply_mapping(mapping: LinearMapping, slice_index):
    """Position of a slice under the fitted line, clamped to [0, 100]."""
    idx = np.asarray(slice_index, dtype=np.float64)
    pos = np.clip(mapping.slope * idx + mapping.intercept, POSITION_MIN, POSITION_MAX)
    if np.ndim(slice_index) == 0:
        return float(pos)
    return pos


def localize_scan(
    volume,
    predictor: Predictor,
    sampler: SamplerConfig = SamplerConfig(),
    ransac: RansacConfig = RansacConfig(),
) -> tuple[LinearMapping, np.ndarray]:
    """Full pipeline: sample, predict, fit, apply to every slice.

    The predictor is queried at most sampler.sample_count times however
    many slices the volume has.
    """
    indices = sample_indices(volume.meta.num_slices, sampler)
    sample = predictor.predict_batch(volume, indices)
    mapping = fit_mapping(sample, ransac)
    positions = apply_mapping(mapping, np.arange(volume.meta.num_slices))
    return mapping, positions


# Tolerance in slice units absorbing float noise when inverting the line.
_BOUNDARY_EPS = 1e-9


def region_for_interval(
    mapping: LinearMapping, num_slices: int, lo: float, hi: float
) -> tuple[int, int] | None:
    """Maximal contiguous slice range whose positions fall in [lo, hi].

    Boundaries round inward so no returned slice lies outside the
    requested anatomy; handles both slope signs. None when the interval
    misses the scan entirely.
    """
    if not lo < hi:
        raise ValueError(f"interval requires lo < hi, got [{lo}, {hi}]")
    if abs(mapping.slope) <= 1e-12:
        raise DegenerateMappingError(
            f"slope {mapping.slope} cannot be inverted for a position interval"
        )
    a = (lo - mapping.intercept) / mapping.slope
    b = (hi - mapping.intercept) / mapping.slope
    i_min, i_max = (a, b) if a <= b else (b, a)
    first = max(0, math.ceil(i_min - _BOUNDARY_EPS))
    last = min(num_slices - 1, math.floor(i_max + _BOUNDARY_EPS))
    if first > last:
        return None
    return first, last
