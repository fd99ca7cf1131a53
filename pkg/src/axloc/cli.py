"""Command-line front end.

Subcommands: localize, region, phantom, bench, report, serve. Settings
merge as flags > config file (--config or AXLOC_CONFIG) > defaults.

Exit codes are a total function of outcome class:

    0  success (localization accepted)
    1  I/O or usage error
    2  localization rejected by the gatekeeper
    3  file format / parse error
    4  no consensus (degenerate or unfittable sample)
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .coords import DEFAULT_LANDMARKS, LandmarkTable, UnknownLandmarkError
from .fitter import (
    DegenerateMappingError,
    DegenerateSampleError,
    LinearMapping,
    NoConsensusError,
    RansacConfig,
    SamplerConfig,
    apply_mapping,
    fit_mapping,
    localize_scan,
    region_for_interval,
    sample_indices,
)
from .gatekeeper import GateConfig, evaluate, no_consensus_verdict
from .phantom import CohortDistribution, generate_cohort, load_manifest
from .predictor import (
    FilePredictor,
    MissingPredictionError,
    NoiseModel,
    SyntheticOracle,
)
from .volume_io import (
    PredictionFormatError,
    VolumeFormatError,
    load_predictions,
    load_volume,
)
from . import bench as bench_mod

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2
EXIT_FORMAT = 3
EXIT_NO_CONSENSUS = 4

LOCALIZE_SCHEMA_VERSION = 1


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which collides with the
    # gate-rejection code; route usage problems to the generic error code.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        path = os.environ.get("AXLOC_CONFIG")
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_ERROR) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}", EXIT_FORMAT) from exc
    if not isinstance(config, dict):
        raise CliError(f"config {path} must hold a JSON object", EXIT_FORMAT)
    return config


def _merged(args, config: dict, block: str, key: str, flag_value, default):
    """flags > config file > defaults."""
    if flag_value is not None:
        return flag_value
    return config.get(block, {}).get(key, default)


def _sampler_config(args, config) -> SamplerConfig:
    return SamplerConfig(
        sample_count=int(_merged(args, config, "sampler", "sample_count",
                                 args.samples, SamplerConfig().sample_count)),
    )


def _ransac_config(args, config) -> RansacConfig:
    base = RansacConfig()
    return RansacConfig(
        iterations=int(_merged(args, config, "ransac", "iterations",
                               args.ransac_iters, base.iterations)),
        inlier_threshold_units=float(_merged(args, config, "ransac", "inlier_threshold_units",
                                             args.inlier_threshold, base.inlier_threshold_units)),
        min_inliers=int(_merged(args, config, "ransac", "min_inliers",
                                args.min_inliers, base.min_inliers)),
        seed=int(_merged(args, config, "ransac", "seed", args.seed, base.seed)),
    )


def _gate_config(args, config) -> GateConfig:
    base = GateConfig()
    mm_range = _merged(args, config, "gate", "mm_per_unit_range",
                       args.mm_per_unit, list(base.mm_per_unit_range))
    return GateConfig(
        max_fit_score_units=float(_merged(args, config, "gate", "max_fit_score_units",
                                          args.max_fit_score, base.max_fit_score_units)),
        min_inlier_fraction=float(_merged(args, config, "gate", "min_inlier_fraction",
                                          args.min_inlier_fraction, base.min_inlier_fraction)),
        mm_per_unit_range=(float(mm_range[0]), float(mm_range[1])),
        require_known_spacing=bool(_merged(args, config, "gate", "require_known_spacing",
                                           None, base.require_known_spacing)),
    )


def _noise_model(args, config) -> NoiseModel:
    base = NoiseModel()
    return NoiseModel(
        sigma_units=float(_merged(args, config, "noise", "sigma_units",
                                  args.noise_sigma, base.sigma_units)),
        outlier_rate=float(_merged(args, config, "noise", "outlier_rate",
                                   args.outlier_rate, base.outlier_rate)),
        seed=int(_merged(args, config, "noise", "seed", args.seed, base.seed)),
    )


def _landmark_table(args) -> LandmarkTable:
    if args.landmarks:
        return LandmarkTable.load(args.landmarks)
    return DEFAULT_LANDMARKS


def _build_predictor(args, config):
    if args.predictions:
        return FilePredictor(load_predictions(args.predictions))
    if args.truth:
        table = [p for _, p in load_predictions(args.truth).records]
        return SyntheticOracle(_noise_model(args, config), table=table)
    raise CliError("a predictor is required: pass --predictions or --truth", EXIT_ERROR)


def _localize_payload(mapping: LinearMapping, verdict, num_slices: int) -> dict:
    per_slice = apply_mapping(mapping, np.arange(num_slices))
    return {
        "schema_version": LOCALIZE_SCHEMA_VERSION,
        "slope": mapping.slope,
        "intercept": mapping.intercept,
        "fit_score": mapping.fit_score,
        "inlier_count": mapping.inlier_count,
        "num_slices": num_slices,
        "verdict": verdict.to_dict(),
        "per_slice": [round(float(p), 3) for p in per_slice],
    }


def _emit_json(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, separators=(",", ": ")))
    sys.stdout.write("\n")


def cmd_localize(args) -> int:
    config = _load_config_file(args.config)
    volume = load_volume(args.volume)
    predictor = _build_predictor(args, config)
    sampler = _sampler_config(args, config)
    ransac = _ransac_config(args, config)
    gate = _gate_config(args, config)

    try:
        mapping, positions = localize_scan(volume, predictor, sampler, ransac)
    except (NoConsensusError, DegenerateSampleError) as exc:
        verdict = no_consensus_verdict()
        if args.json:
            _emit_json({
                "schema_version": LOCALIZE_SCHEMA_VERSION,
                "error": str(exc),
                "verdict": verdict.to_dict(),
            })
        else:
            print(f"no consensus: {exc}", file=sys.stderr)
        return EXIT_NO_CONSENSUS

    verdict = evaluate(mapping, volume.meta, gate)
    if args.json:
        _emit_json(_localize_payload(mapping, verdict, volume.meta.num_slices))
    else:
        print("slice_index,position")
        for i, p in enumerate(positions):
            print(f"{i},{p:.3f}")
        status = "accepted" if verdict.accepted else (
            "rejected: " + ",".join(verdict.triggered_rules))
        print(
            f"slope={mapping.slope:.6g} intercept={mapping.intercept:.6g} "
            f"fit_score={mapping.fit_score:.3f} inliers={mapping.inlier_count}/"
            f"{len(mapping.inlier_mask)} {status}",
            file=sys.stderr,
        )
    return EXIT_OK if verdict.accepted else EXIT_REJECTED


def _resolve_bound(value: str, table: LandmarkTable) -> float:
    try:
        return float(value)
    except ValueError:
        return table.position_of(value)


def cmd_region(args) -> int:
    config = _load_config_file(args.config)
    table = _landmark_table(args)
    lo = _resolve_bound(args.bound_from, table)
    hi = _resolve_bound(args.bound_to, table)
    if not lo < hi:
        raise CliError(f"--from ({lo}) must be below --to ({hi})", EXIT_ERROR)

    if args.mapping:
        with open(args.mapping, "r", encoding="utf-8") as fh:
            saved = json.load(fh)
        try:
            mapping = LinearMapping(
                slope=float(saved["slope"]),
                intercept=float(saved["intercept"]),
                fit_score=float(saved.get("fit_score", 0.0)),
                inlier_mask=(True, True),
                sample=(),
            )
            num_slices = int(saved.get("num_slices") or len(saved["per_slice"]))
        except (KeyError, TypeError) as exc:
            raise CliError(f"mapping file lacks field {exc}", EXIT_FORMAT) from exc
    elif args.volume:
        volume = load_volume(args.volume)
        predictor = _build_predictor(args, config)
        mapping, _ = localize_scan(volume, predictor,
                                   _sampler_config(args, config),
                                   _ransac_config(args, config))
        num_slices = volume.meta.num_slices
    else:
        raise CliError("need --mapping or a volume with a predictor", EXIT_ERROR)

    region = region_for_interval(mapping, num_slices, lo, hi)
    if args.json:
        _emit_json({
            "from": lo, "to": hi,
            "region": None if region is None else {"first": region[0], "last": region[1]},
        })
    else:
        print("none" if region is None else f"{region[0]} {region[1]}")
    return EXIT_OK


def cmd_phantom(args) -> int:
    dist = CohortDistribution(
        num_slices_range=(args.min_slices, args.max_slices),
        corruption_rate=args.corruption_rate,
    )
    manifest = generate_cohort(args.count, dist, args.seed or 0, args.out)
    if args.json:
        _emit_json({"manifest": os.path.join(args.out, "manifest.json"),
                    "count": len(manifest.entries),
                    "corrupted": sum(e.corrupted for e in manifest.entries)})
    else:
        print(os.path.join(args.out, "manifest.json"))
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config_file(args.config)
    manifest = load_manifest(args.manifest)
    result = bench_mod.run_cohort_benchmark(
        manifest,
        sampler=_sampler_config(args, config),
        ransac=_ransac_config(args, config),
        jobs=args.jobs,
    )
    stats = result.all_stats()
    if args.report:
        bench_mod.write_report_csv(stats, args.report)
    if args.plot:
        raw_pred, truth = _scatter_arrays(manifest, args, config)
        bench_mod.write_scatter_svg(raw_pred, truth, args.plot)
    if args.json:
        _emit_json({
            "pooled_fused": vars(result.pooled_fused),
            "pooled_raw": vars(result.pooled_raw),
            "timing": {
                "scans": result.timing.scans,
                "mean_seconds": result.timing.mean_seconds,
                "median_seconds": result.timing.median_seconds,
            },
        })
    else:
        print(bench_mod.format_table([result.pooled_fused, result.pooled_raw]))
        print(f"scans={result.timing.scans} "
              f"mean={result.timing.mean_seconds * 1e3:.1f}ms/scan "
              f"median={result.timing.median_seconds * 1e3:.1f}ms/scan")
    return EXIT_OK


def _scatter_arrays(manifest, args, config):
    from .phantom import build_predictor

    sampler = _sampler_config(args, config)
    preds, truths = [], []
    for entry in manifest.entries:
        if entry.corrupted:
            continue
        volume = load_volume(manifest.volume_path(entry))
        truth = np.array([p for _, p in
                          load_predictions(manifest.truth_path(entry)).records])
        idx = sample_indices(volume.meta.num_slices, sampler)
        sample = build_predictor(entry.spec, entry.seed).predict_batch(volume, idx)
        preds.extend(p.position for p in sample)
        truths.extend(truth[idx])
    return np.asarray(preds), np.asarray(truths)


def cmd_report(args) -> int:
    stats = bench_mod.read_report_csv(args.input)
    if args.json:
        _emit_json({"stats": [vars(s) for s in stats]})
    else:
        print(bench_mod.format_table(stats))
    return EXIT_OK


def cmd_serve(args) -> int:
    from . import service

    config = _load_config_file(args.config)
    service_config = service.ServiceConfig(
        ransac=_ransac_config(args, config),
        gate=_gate_config(args, config),
        landmarks=_landmark_table(args),
    )
    service.serve(service_config, bind=args.bind, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or AXLOC_CONFIG env var)")
    common.add_argument("--seed", type=int, default=None, help="seed for RANSAC and noise")
    common.add_argument("--landmarks", help="override landmark table JSON")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    fit_flags = argparse.ArgumentParser(add_help=False)
    fit_flags.add_argument("--samples", type=int, default=None,
                           help="slices sampled per scan (default 30)")
    fit_flags.add_argument("--ransac-iters", type=int, default=None)
    fit_flags.add_argument("--inlier-threshold", type=float, default=None,
                           help="RANSAC inlier threshold in units (default 2.0)")
    fit_flags.add_argument("--min-inliers", type=int, default=None)

    predictor_flags = argparse.ArgumentParser(add_help=False)
    predictor_flags.add_argument("--predictions", help="per-slice predictions CSV")
    predictor_flags.add_argument("--truth", help="truth CSV for the synthetic oracle")
    predictor_flags.add_argument("--noise-sigma", type=float, default=None)
    predictor_flags.add_argument("--outlier-rate", type=float, default=None)

    gate_flags = argparse.ArgumentParser(add_help=False)
    gate_flags.add_argument("--max-fit-score", type=float, default=None)
    gate_flags.add_argument("--min-inlier-fraction", type=float, default=None)
    gate_flags.add_argument("--mm-per-unit", type=float, nargs=2, default=None,
                            metavar=("LO", "HI"))

    parser = _Parser(prog="axloc",
                     description="Axial CT scan localization engine")
    parser.add_argument("--version", action="version", version=f"axloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize", parents=[common, fit_flags, predictor_flags, gate_flags],
                       help="fit a scan and emit per-slice positions")
    p.add_argument("volume", help="AXV1 volume file")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("region", parents=[common, fit_flags, predictor_flags],
                       help="slice range covering a body interval")
    p.add_argument("volume", nargs="?", help="AXV1 volume file")
    p.add_argument("--mapping", help="JSON produced by localize --json")
    p.add_argument("--from", dest="bound_from", required=True,
                   help="landmark id or position")
    p.add_argument("--to", dest="bound_to", required=True,
                   help="landmark id or position")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("phantom", parents=[common], help="generate a phantom cohort")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corruption-rate", type=float, default=0.05)
    p.add_argument("--min-slices", type=int, default=40)
    p.add_argument("--max-slices", type=int, default=1500)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("bench", parents=[common, fit_flags],
                       help="benchmark a cohort against its truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", help="write stats CSV here")
    p.add_argument("--plot", help="write predicted-vs-truth SVG here")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", parents=[common], help="render a stats CSV")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", parents=[common, fit_flags, gate_flags],
                       help="JSON-over-HTTP localization service")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse --help/--version/usage errors
        return int(exc.code or 0)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (VolumeFormatError, PredictionFormatError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NoConsensusError, DegenerateSampleError) as exc:
        print(f"no consensus: {exc}", file=sys.stderr)
        return EXIT_NO_CONSENSUS
    except MissingPredictionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (UnknownLandmarkError, DegenerateMappingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
