"""Accuracy statistics (MAE / MdAE) and cohort benchmarking.

Errors are reported in normalized units with the centimeter equivalent
in brackets (1 unit = 1.7 cm at the default 170 cm height). Two
referencing modes exist: dispersion around a group mean, and absolute
error against known phantom truth.
"""

from __future__ import annotations

import concurrent.futures
import csv
import time
from dataclasses import dataclass

import numpy as np

from .coords import BodyScale, units_to_cm
from .fitter import RansacConfig, SamplerConfig, localize_scan, sample_indices
from .phantom import CohortManifest, build_predictor
from .predictor import CountingPredictor
from .volume_io import load_predictions, load_volume

__all__ = [
    "ErrorStats",
    "TimingSummary",
    "BenchmarkResult",
    "absolute_errors",
    "summarize",
    "run_cohort_benchmark",
    "write_report_csv",
    "read_report_csv",
    "format_table",
    "write_scatter_svg",
]

REPORT_COLUMNS = ("group_id", "count", "mean_position",
                  "mae_units", "mdae_units", "mae_cm", "mdae_cm")


@dataclass(frozen=True)
class ErrorStats:
    group_id: str
    count: int
    mean_position: float
    mae_units: float
    mdae_units: float
    mae_cm: float
    mdae_cm: float


@dataclass(frozen=True)
class TimingSummary:
    scans: int
    mean_seconds: float
    median_seconds: float
    max_seconds: float
    predictor_calls: tuple[int, ...]


@dataclass(frozen=True)
class BenchmarkResult:
    per_scan: tuple[ErrorStats, ...]
    pooled_fused: ErrorStats
    pooled_raw: ErrorStats
    timing: TimingSummary

    def all_stats(self) -> list[ErrorStats]:
        return [self.pooled_fused, self.pooled_raw, *self.per_scan]


def absolute_errors(estimates, reference=None) -> np.ndarray:
    """Absolute errors of estimates against a reference.

    reference None uses the group mean of the estimates (dispersion
    mode); a scalar or a per-item sequence gives truth-referenced
    errors.
    """
    est = np.asarray(estimates, dtype=np.float64)
    if est.size == 0:
        raise ValueError("absolute_errors needs at least one estimate")
    if reference is None:
        reference = est.mean()
    ref = np.asarray(reference, dtype=np.float64)
    if ref.ndim > 0 and ref.shape != est.shape:
        raise ValueError(f"reference shape {ref.shape} does not match {est.shape}")
    return np.abs(est - ref)


def summarize(errors, positions, scale: BodyScale = BodyScale(),
              group_id: str = "") -> ErrorStats:
    """Mean/median absolute error in units and cm for one group."""
    errors = np.asarray(errors, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    if errors.size == 0 or errors.shape != positions.shape:
        raise ValueError("errors and positions must be non-empty and aligned")
    mae = float(errors.mean())
    mdae = float(np.median(errors))
    return ErrorStats(
        group_id=group_id,
        count=int(errors.size),
        mean_position=float(positions.mean()),
        mae_units=mae,
        mdae_units=mdae,
        mae_cm=units_to_cm(mae, scale),
        mdae_cm=units_to_cm(mdae, scale),
    )


def _bench_one(manifest, entry, sampler, ransac, scale):
    volume = load_volume(manifest.volume_path(entry))
    truth = np.array([p for _, p in load_predictions(manifest.truth_path(entry)).records])
    predictor = CountingPredictor(build_predictor(entry.spec, entry.seed))

    start = time.perf_counter()
    mapping, positions = localize_scan(volume, predictor, sampler, ransac)
    elapsed = time.perf_counter() - start

    fused_err = np.abs(positions - truth)
    sampled = np.asarray(sample_indices(volume.meta.num_slices, sampler))
    raw_pred = np.array([p.position for p in mapping.sample])
    raw_err = np.abs(raw_pred - truth[sampled])

    stats = summarize(fused_err, truth, scale, group_id=entry.phantom_id)
    return stats, fused_err, truth, raw_err, truth[sampled], elapsed, predictor.calls


def run_cohort_benchmark(
    manifest: CohortManifest,
    sampler: SamplerConfig = SamplerConfig(),
    ransac: RansacConfig = RansacConfig(),
    scale: BodyScale = BodyScale(),
    jobs: int = 1,
) -> BenchmarkResult:
    """Localize every non-corrupted phantom and score it against truth.

    Produces per-scan stats plus two pooled rows: fused (per-slice
    positions from the fitted line) and raw (the sampled predictions
    themselves). Aggregation order is fixed by the manifest, so results
    do not depend on the job count.
    """
    entries = [e for e in manifest.entries if not e.corrupted]
    if not entries:
        raise ValueError("cohort has no clean phantoms to benchmark")

    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda e: _bench_one(manifest, e, sampler, ransac, scale), entries))
    else:
        results = [_bench_one(manifest, e, sampler, ransac, scale) for e in entries]

    per_scan = tuple(r[0] for r in results)
    fused_err = np.concatenate([r[1] for r in results])
    fused_pos = np.concatenate([r[2] for r in results])
    raw_err = np.concatenate([r[3] for r in results])
    raw_pos = np.concatenate([r[4] for r in results])
    times = np.array([r[5] for r in results])
    calls = tuple(int(r[6]) for r in results)

    return BenchmarkResult(
        per_scan=per_scan,
        pooled_fused=summarize(fused_err, fused_pos, scale, group_id="fused_pooled"),
        pooled_raw=summarize(raw_err, raw_pos, scale, group_id="raw_pooled"),
        timing=TimingSummary(
            scans=len(entries),
            mean_seconds=float(times.mean()),
            median_seconds=float(np.median(times)),
            max_seconds=float(times.max()),
            predictor_calls=calls,
        ),
    )


def write_report_csv(stats, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for s in stats:
            writer.writerow([
                s.group_id, s.count,
                f"{s.mean_position:.9g}", f"{s.mae_units:.9g}", f"{s.mdae_units:.9g}",
                f"{s.mae_cm:.9g}", f"{s.mdae_cm:.9g}",
            ])


def read_report_csv(path) -> list[ErrorStats]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report columns {reader.fieldnames}")
        return [
            ErrorStats(
                group_id=row["group_id"],
                count=int(row["count"]),
                mean_position=float(row["mean_position"]),
                mae_units=float(row["mae_units"]),
                mdae_units=float(row["mdae_units"]),
                mae_cm=float(row["mae_cm"]),
                mdae_cm=float(row["mdae_cm"]),
            )
            for row in reader
        ]


def format_table(stats) -> str:
    """Aligned text table, units with bracketed centimeters."""
    lines = [f"{'group':<16} {'n':>7} {'mean_pos':>9} {'MAE':>14} {'MdAE':>14}"]
    for s in stats:
        lines.append(
            f"{s.group_id:<16} {s.count:>7} {s.mean_position:>9.2f} "
            f"{s.mae_units:>6.2f} [{s.mae_cm:.2f}] {s.mdae_units:>6.2f} [{s.mdae_cm:.2f}]"
        )
    return "\n".join(lines)


def write_scatter_svg(predicted, truth, path) -> None:
    """Predicted-vs-truth scatter; requires matplotlib."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(truth, predicted, s=4, alpha=0.4)
    ax.plot([0, 100], [0, 100], "r--", linewidth=1)
    ax.set_xlabel("truth position [units]")
    ax.set_ylabel("predicted position [units]")
    ax.set_xlim(0, 100)
    ax.set_ylim(0, 100)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
