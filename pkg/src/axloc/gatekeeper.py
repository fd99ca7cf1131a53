"""Rule-based reliability screening of localization results.

Four rules decide whether a fitted mapping is trustworthy:

    R1  fit_score <= max_fit_score_units
    R2  inlier fraction >= min_inlier_fraction
    R3  spacing_between_slices_mm / |slope| within mm_per_unit_range
        (evaluated only when slice spacing is known)
    R4  |slope| > 1e-6 (a flat line localizes nothing)

R0 is reserved for fits rejected upstream with no consensus. Verdicts
are advisory: localization results are still returned alongside them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .fitter import LinearMapping

__all__ = ["GateConfig", "ReliabilityVerdict", "YieldSummary",
           "no_consensus_verdict", "evaluate", "yield_report"]

RULE_IDS = ("R0", "R1", "R2", "R3", "R4")

_MIN_SLOPE = 1e-6


@dataclass(frozen=True)
class GateConfig:
    """Exclusion thresholds.

    The mm-per-unit window [10, 30] corresponds to body heights of 100
    to 300 cm, generous enough for children and very tall adults.
    """

    max_fit_score_units: float = 2.0
    min_inlier_fraction: float = 0.6
    mm_per_unit_range: tuple[float, float] = (10.0, 30.0)
    require_known_spacing: bool = False

    def __post_init__(self):
        lo, hi = self.mm_per_unit_range
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi):
            raise ValueError(f"mm_per_unit_range must be 0 < lo < hi, got {self.mm_per_unit_range}")
        if not (math.isfinite(self.max_fit_score_units) and self.max_fit_score_units > 0):
            raise ValueError(f"max_fit_score_units must be positive, got {self.max_fit_score_units}")
        if not 0 < self.min_inlier_fraction <= 1:
            raise ValueError(f"min_inlier_fraction must be in (0, 1], got {self.min_inlier_fraction}")


@dataclass(frozen=True)
class ReliabilityVerdict:
    accepted: bool
    triggered_rules: tuple[str, ...]
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.accepted != (len(self.triggered_rules) == 0):
            raise ValueError("accepted must match triggered_rules being empty")

    def to_dict(self) -> dict:
        # Non-finite diagnostics (e.g. mm/unit at slope 0) map to None so
        # the result always serializes as strict JSON.
        diags = {
            k: (v if isinstance(v, float) and math.isfinite(v) else None)
            for k, v in self.diagnostics.items()
        }
        return {
            "accepted": self.accepted,
            "triggered_rules": list(self.triggered_rules),
            "diagnostics": diags,
        }


def no_consensus_verdict(detail: float = 0.0) -> ReliabilityVerdict:
    """Verdict for scans whose fit failed upstream (rule R0)."""
    return ReliabilityVerdict(False, ("R0",), {"R0": float(detail)})


def evaluate(mapping: LinearMapping, meta, config: GateConfig = GateConfig()) -> ReliabilityVerdict:
    """Apply the exclusion rules to a successful fit.

    meta is a VolumeMeta, or None when no acquisition metadata is
    available (R3 is then skipped unless require_known_spacing).
    """
    triggered: list[str] = []
    diagnostics: dict[str, float] = {}

    diagnostics["R1"] = mapping.fit_score
    if mapping.fit_score > config.max_fit_score_units:
        triggered.append("R1")

    fraction = mapping.inlier_count / len(mapping.inlier_mask)
    diagnostics["R2"] = fraction
    if fraction < config.min_inlier_fraction:
        triggered.append("R2")

    spacing = getattr(meta, "spacing_between_slices_mm", None)
    if spacing is not None:
        mm_per_unit = spacing / abs(mapping.slope) if mapping.slope != 0 else math.inf
        diagnostics["R3"] = mm_per_unit
        lo, hi = config.mm_per_unit_range
        if not lo <= mm_per_unit <= hi:
            triggered.append("R3")
    elif config.require_known_spacing:
        diagnostics["R3"] = math.nan
        triggered.append("R3")

    diagnostics["R4"] = abs(mapping.slope)
    if abs(mapping.slope) <= _MIN_SLOPE:
        triggered.append("R4")

    pixel_spacing = getattr(meta, "pixel_spacing_mm", None)
    if pixel_spacing is not None:
        diagnostics["pixel_spacing_mm"] = float(pixel_spacing[0])

    return ReliabilityVerdict(
        accepted=not triggered,
        triggered_rules=tuple(triggered),
        diagnostics=diagnostics,
    )


@dataclass(frozen=True)
class YieldSummary:
    total: int
    accepted: int
    rule_counts: dict[str, int]

    @property
    def yield_fraction(self) -> float:
        return self.accepted / self.total


def yield_report(verdicts) -> YieldSummary:
    """Acceptance yield and per-rule trigger counts over a cohort."""
    verdicts = list(verdicts)
    if not verdicts:
        raise ValueError("yield_report needs at least one verdict")
    counts = {rule: 0 for rule in RULE_IDS}
    accepted = 0
    for v in verdicts:
        accepted += v.accepted
        for rule in v.triggered_rules:
            counts[rule] = counts.get(rule, 0) + 1
    return YieldSummary(total=len(verdicts), accepted=accepted, rule_counts=counts)
