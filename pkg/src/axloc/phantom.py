"""Synthetic scan cohorts with known ground-truth lines.

A phantom is a volume whose voxels are seeded noise (the synthetic
predictor never reads them) plus a stored truth line mapping slice index
to normalized position. Cohorts mix clean phantoms with controlled
corruptions so the fitter and gatekeeper can be validated desk-scale
with exact labels.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .coords import POSITION_MAX, POSITION_MIN
from .predictor import NoiseModel, Predictor, SyntheticOracle
from .volume_io import ORIENTATIONS, Volume, VolumeMeta, save_predictions, save_volume

__all__ = [
    "CORRUPTIONS",
    "PhantomSpec",
    "CohortDistribution",
    "CohortEntry",
    "CohortManifest",
    "generate_phantom",
    "build_predictor",
    "sample_cohort_entries",
    "generate_cohort",
    "load_manifest",
]

CORRUPTIONS = ("none", "constant_predictions", "shuffled_predictions", "wrong_slope")

# Truth lines may leave the body slightly so clamping paths get exercised,
# but not by more than 20 units at either end.
_LINE_MIN, _LINE_MAX = -20.0, 120.0


@dataclass(frozen=True)
class PhantomSpec:
    num_slices: int
    truth_slope: float
    truth_intercept: float
    noise: NoiseModel = NoiseModel()
    spacing_between_slices_mm: float = 1.0
    orientation: str = "unknown"
    corruption: str = "none"
    rows: int = 16
    cols: int = 16

    def __post_init__(self):
        if self.num_slices < 1:
            raise ValueError(f"num_slices must be >= 1, got {self.num_slices}")
        if self.corruption not in CORRUPTIONS:
            raise ValueError(f"corruption must be one of {CORRUPTIONS}, got {self.corruption!r}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if not self.spacing_between_slices_mm > 0:
            raise ValueError("spacing_between_slices_mm must be positive")
        for i in (0, self.num_slices - 1):
            value = self.truth_slope * i + self.truth_intercept
            if not _LINE_MIN <= value <= _LINE_MAX:
                raise ValueError(
                    f"truth line reaches {value:.1f} at slice {i}, "
                    f"outside [{_LINE_MIN}, {_LINE_MAX}]"
                )

    def truth_positions(self) -> np.ndarray:
        line = self.truth_slope * np.arange(self.num_slices) + self.truth_intercept
        return np.clip(line, POSITION_MIN, POSITION_MAX)

    def to_dict(self) -> dict:
        return {
            "num_slices": self.num_slices,
            "truth_slope": self.truth_slope,
            "truth_intercept": self.truth_intercept,
            "noise": {
                "sigma_units": self.noise.sigma_units,
                "outlier_rate": self.noise.outlier_rate,
                "seed": self.noise.seed,
            },
            "spacing_between_slices_mm": self.spacing_between_slices_mm,
            "orientation": self.orientation,
            "corruption": self.corruption,
            "rows": self.rows,
            "cols": self.cols,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PhantomSpec":
        noise = NoiseModel(**raw["noise"])
        fields = {k: raw[k] for k in (
            "num_slices", "truth_slope", "truth_intercept",
            "spacing_between_slices_mm", "orientation", "corruption", "rows", "cols",
        )}
        return cls(noise=noise, **fields)


def generate_phantom(spec: PhantomSpec, seed: int) -> tuple[Volume, np.ndarray]:
    """Seeded volume plus the clamped per-slice truth positions."""
    rng = np.random.default_rng(seed)
    voxels = rng.integers(-1000, 2001, size=(spec.num_slices, spec.rows, spec.cols),
                          dtype=np.int16)
    meta = VolumeMeta(
        num_slices=spec.num_slices,
        rows=spec.rows,
        cols=spec.cols,
        spacing_between_slices_mm=spec.spacing_between_slices_mm,
        pixel_spacing_mm=(0.8, 0.8),
        orientation=spec.orientation,
    )
    return Volume(meta=meta, voxels=voxels), spec.truth_positions()


class _TablePredictor(Predictor):
    def __init__(self, table: np.ndarray):
        self.table = np.clip(np.asarray(table, dtype=np.float64),
                             POSITION_MIN, POSITION_MAX)

    def _positions(self, indices: np.ndarray) -> np.ndarray:
        return self.table[indices]


def build_predictor(spec: PhantomSpec, seed: int) -> Predictor:
    """Predictor a phantom would see, honoring its corruption mode.

    Corruptions model classifier failure shapes: stuck-constant output,
    slice order scrambled away, and a systematically wrong slope.
    """
    if spec.corruption == "none":
        return SyntheticOracle(spec.noise, slope=spec.truth_slope,
                               intercept=spec.truth_intercept)
    if spec.corruption == "constant_predictions":
        center = spec.truth_slope * (spec.num_slices - 1) / 2 + spec.truth_intercept
        return _TablePredictor(np.full(spec.num_slices, center))
    if spec.corruption == "shuffled_predictions":
        perm = np.random.default_rng(seed).permutation(spec.num_slices)
        return _TablePredictor(spec.truth_slope * perm + spec.truth_intercept)
    if spec.corruption == "wrong_slope":
        factor = 3.0 if seed % 2 == 0 else 1.0 / 3.0
        center_i = (spec.num_slices - 1) / 2
        center = spec.truth_slope * center_i + spec.truth_intercept
        wrong = factor * spec.truth_slope
        return SyntheticOracle(spec.noise, slope=wrong,
                               intercept=center - wrong * center_i)
    raise ValueError(f"unhandled corruption {spec.corruption!r}")


@dataclass(frozen=True)
class CohortDistribution:
    """Parameter ranges the cohort sampler draws phantom specs from.

    Slice spacing is derived per phantom so that the implied mm-per-unit
    matches a 170 cm body; scans cover a configurable span of body units.
    """

    num_slices_range: tuple[int, int] = (40, 1500)
    span_units_range: tuple[float, float] = (10.0, 70.0)
    corruption_rate: float = 0.05
    sigma_units: float = NoiseModel().sigma_units
    outlier_rate: float = NoiseModel().outlier_rate
    mm_per_unit: float = 17.0
    rows: int = 16
    cols: int = 16

    def __post_init__(self):
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError(f"corruption_rate must be in [0, 1], got {self.corruption_rate}")
        lo, hi = self.num_slices_range
        if not 2 <= lo <= hi:
            raise ValueError(f"bad num_slices_range {self.num_slices_range}")


@dataclass(frozen=True)
class CohortEntry:
    phantom_id: str
    spec: PhantomSpec
    seed: int

    @property
    def corrupted(self) -> bool:
        return self.spec.corruption != "none"


def sample_cohort_entries(
    count: int,
    dist: CohortDistribution = CohortDistribution(),
    master_seed: int = 0,
) -> list[CohortEntry]:
    """Deterministically sampled phantom specs, corruption pre-assigned.

    Exactly round(count * corruption_rate) entries are corrupted, their
    slots and corruption kinds chosen by the master-seeded generator.
    """
    rng = np.random.default_rng(master_seed)
    n_corrupt = int(round(count * dist.corruption_rate))
    corrupt_slots = set(rng.permutation(count)[:n_corrupt].tolist()) if count else set()

    entries = []
    for k in range(count):
        n = int(rng.integers(dist.num_slices_range[0], dist.num_slices_range[1] + 1))
        span = float(rng.uniform(*dist.span_units_range))
        orientation = "head_first" if rng.random() < 0.5 else "feet_first"
        slope = span / (n - 1) * (1.0 if orientation == "head_first" else -1.0)
        if slope > 0:
            intercept = float(rng.uniform(0.0, 100.0 - span))
        else:
            intercept = float(rng.uniform(span, 100.0))
        corruption = "none"
        if k in corrupt_slots:
            corruption = CORRUPTIONS[1 + int(rng.integers(0, 3))]
        seed = int(rng.integers(0, 2**63))
        spec = PhantomSpec(
            num_slices=n,
            truth_slope=slope,
            truth_intercept=intercept,
            noise=NoiseModel(sigma_units=dist.sigma_units,
                             outlier_rate=dist.outlier_rate, seed=seed),
            spacing_between_slices_mm=abs(slope) * dist.mm_per_unit,
            orientation=orientation,
            corruption=corruption,
            rows=dist.rows,
            cols=dist.cols,
        )
        entries.append(CohortEntry(phantom_id=f"phantom_{k:05d}", spec=spec, seed=seed))
    return entries


@dataclass(frozen=True)
class CohortManifest:
    master_seed: int
    entries: tuple[CohortEntry, ...]
    root_dir: str = "."

    def volume_path(self, entry: CohortEntry) -> str:
        return os.path.join(self.root_dir, f"{entry.phantom_id}.axv")

    def truth_path(self, entry: CohortEntry) -> str:
        return os.path.join(self.root_dir, f"{entry.phantom_id}_truth.csv")

    def to_json(self) -> str:
        payload = {
            "version": 1,
            "master_seed": self.master_seed,
            "entries": [
                {
                    "id": e.phantom_id,
                    "seed": e.seed,
                    "corrupted": e.corrupted,
                    "volume": f"{e.phantom_id}.axv",
                    "truth": f"{e.phantom_id}_truth.csv",
                    "spec": e.spec.to_dict(),
                }
                for e in self.entries
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def generate_cohort(
    count: int,
    dist: CohortDistribution = CohortDistribution(),
    master_seed: int = 0,
    out_dir: str = ".",
) -> CohortManifest:
    """Generate count phantoms plus a manifest under out_dir.

    Regeneration with the same master seed produces byte-identical
    files; per-entry seeds make generation order irrelevant.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = sample_cohort_entries(count, dist, master_seed)
    manifest = CohortManifest(master_seed=master_seed, entries=tuple(entries),
                              root_dir=out_dir)
    for entry in entries:
        volume, truth = generate_phantom(entry.spec, entry.seed)
        save_volume(volume, manifest.volume_path(entry))
        save_predictions(enumerate(truth.tolist()), manifest.truth_path(entry))
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())
        fh.write("\n")
    return manifest


def load_manifest(path) -> CohortManifest:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if raw.get("version") != 1:
        raise ValueError(f"unsupported manifest version {raw.get('version')!r}")
    entries = tuple(
        CohortEntry(
            phantom_id=item["id"],
            spec=PhantomSpec.from_dict(item["spec"]),
            seed=item["seed"],
        )
        for item in raw["entries"]
    )
    return CohortManifest(
        master_seed=raw["master_seed"],
        entries=entries,
        root_dir=os.path.dirname(os.path.abspath(path)),
    )
