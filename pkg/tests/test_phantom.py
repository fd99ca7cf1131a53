import json
import os

import numpy as np
import pytest

from axloc.fitter import NoConsensusError, fit_mapping, sample_indices
from axloc.gatekeeper import GateConfig, evaluate
from axloc.phantom import (
    CohortDistribution,
    PhantomSpec,
    build_predictor,
    generate_cohort,
    generate_phantom,
    load_manifest,
    sample_cohort_entries,
)
from axloc.predictor import NoiseModel
from axloc.volume_io import load_predictions, load_volume

NOISELESS = NoiseModel(sigma_units=0.0, outlier_rate=0.0, seed=0)


def test_truth_line_endpoints():
    spec = PhantomSpec(num_slices=1300, truth_slope=0.04, truth_intercept=8.0)
    volume, truth = generate_phantom(spec, seed=1)
    assert len(truth) == 1300
    assert truth[0] == pytest.approx(8.0)
    assert truth[-1] == pytest.approx(8.0 + 0.04 * 1299)  # 59.96
    assert volume.meta.num_slices == 1300
    assert volume.voxels.shape == (1300, 16, 16)
    assert volume.voxels.min() >= -1000 and volume.voxels.max() <= 2000


def test_zero_slope_truth_is_constant():
    spec = PhantomSpec(num_slices=50, truth_slope=0.0, truth_intercept=33.0)
    _, truth = generate_phantom(spec, seed=0)
    assert np.all(truth == 33.0)


def test_truth_clamped_to_body_range():
    spec = PhantomSpec(num_slices=100, truth_slope=1.0, truth_intercept=-10.0)
    _, truth = generate_phantom(spec, seed=0)
    assert truth[0] == 0.0
    assert truth[-1] == 89.0
    assert truth.min() >= 0.0 and truth.max() <= 100.0


def test_out_of_bounds_truth_line_rejected():
    with pytest.raises(ValueError, match="truth line"):
        PhantomSpec(num_slices=100, truth_slope=2.0, truth_intercept=0.0)
    with pytest.raises(ValueError):
        PhantomSpec(num_slices=10, truth_slope=0.0, truth_intercept=-30.0)


def test_same_seed_same_phantom():
    spec = PhantomSpec(num_slices=40, truth_slope=0.5, truth_intercept=10.0)
    v1, t1 = generate_phantom(spec, seed=9)
    v2, t2 = generate_phantom(spec, seed=9)
    assert np.array_equal(v1.voxels, v2.voxels)
    assert np.array_equal(t1, t2)
    v3, _ = generate_phantom(spec, seed=10)
    assert not np.array_equal(v1.voxels, v3.voxels)


def test_corrupt_predictor_constant():
    spec = PhantomSpec(num_slices=100, truth_slope=0.5, truth_intercept=10.0,
                       corruption="constant_predictions")
    volume, _ = generate_phantom(spec, seed=3)
    predictor = build_predictor(spec, seed=3)
    positions = [p.position for p in predictor.predict_batch(volume, range(0, 100, 10))]
    assert len(set(positions)) == 1
    # constant equals the truth line at scan center
    assert positions[0] == pytest.approx(0.5 * 49.5 + 10.0)


def test_corrupt_predictor_shuffled_permutes_truth():
    spec = PhantomSpec(num_slices=60, truth_slope=1.0, truth_intercept=10.0,
                       noise=NOISELESS, corruption="shuffled_predictions")
    volume, truth = generate_phantom(spec, seed=4)
    predictor = build_predictor(spec, seed=4)
    got = [p.position for p in predictor.predict_batch(volume, range(60))]
    assert sorted(got) == pytest.approx(sorted(truth.tolist()))
    assert got != truth.tolist()


def test_corrupt_predictor_wrong_slope_factor():
    spec = PhantomSpec(num_slices=200, truth_slope=0.2, truth_intercept=20.0,
                       noise=NOISELESS, corruption="wrong_slope")
    predictor = build_predictor(spec, seed=2)  # even seed: factor 3
    volume, _ = generate_phantom(spec, seed=2)
    a = predictor.predict(volume, 99).position
    b = predictor.predict(volume, 100).position
    assert (b - a) == pytest.approx(0.6, abs=1e-9)


def test_constant_corruption_hits_no_consensus_or_r4():
    # gatekeeper stress property: >= 95% of constant-prediction phantoms
    # must land on the degenerate path under default configs
    hits = 0
    total = 40
    entries = sample_cohort_entries(total, CohortDistribution(corruption_rate=0.0),
                                    master_seed=77)
    for entry in entries:
        spec = PhantomSpec(**{**entry.spec.to_dict(),
                              "noise": entry.spec.noise,
                              "corruption": "constant_predictions"})
        volume, _ = generate_phantom(spec, entry.seed)
        predictor = build_predictor(spec, entry.seed)
        sample = predictor.predict_batch(volume, sample_indices(spec.num_slices))
        try:
            mapping = fit_mapping(sample)
        except NoConsensusError:
            hits += 1
            continue
        verdict = evaluate(mapping, volume.meta, GateConfig())
        if "R4" in verdict.triggered_rules:
            hits += 1
    assert hits >= 0.95 * total


def test_cohort_exact_corruption_count(tmp_path):
    manifest = generate_cohort(100, CohortDistribution(corruption_rate=0.05),
                               master_seed=5, out_dir=str(tmp_path))
    corrupted = [e for e in manifest.entries if e.corrupted]
    assert len(corrupted) == 5
    assert len(manifest.entries) == 100


def test_cohort_files_exist_and_agree(tmp_path):
    manifest = generate_cohort(8, CohortDistribution(num_slices_range=(10, 50)),
                               master_seed=3, out_dir=str(tmp_path))
    for entry in manifest.entries:
        volume = load_volume(manifest.volume_path(entry))
        truth = load_predictions(manifest.truth_path(entry))
        assert volume.meta.num_slices == entry.spec.num_slices
        assert len(truth.records) == entry.spec.num_slices
        assert volume.meta.orientation == entry.spec.orientation


def test_empty_cohort(tmp_path):
    manifest = generate_cohort(0, master_seed=1, out_dir=str(tmp_path))
    assert manifest.entries == ()
    assert os.listdir(tmp_path) == ["manifest.json"]


def test_cohort_regeneration_is_byte_identical(tmp_path):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    dist = CohortDistribution(num_slices_range=(10, 80))
    generate_cohort(6, dist, master_seed=11, out_dir=str(a_dir))
    generate_cohort(6, dist, master_seed=11, out_dir=str(b_dir))
    names = sorted(os.listdir(a_dir))
    assert names == sorted(os.listdir(b_dir))
    for name in names:
        assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()


def test_manifest_round_trip(tmp_path):
    manifest = generate_cohort(4, CohortDistribution(num_slices_range=(10, 40)),
                               master_seed=8, out_dir=str(tmp_path))
    loaded = load_manifest(tmp_path / "manifest.json")
    assert loaded.master_seed == manifest.master_seed
    assert loaded.entries == manifest.entries
    parsed = json.loads((tmp_path / "manifest.json").read_text())
    assert parsed["version"] == 1
    assert {e["corrupted"] for e in parsed["entries"]} <= {True, False}


def test_orientation_controls_slope_sign():
    entries = sample_cohort_entries(60, CohortDistribution(), master_seed=4)
    for entry in entries:
        if entry.spec.orientation == "head_first":
            assert entry.spec.truth_slope > 0
        else:
            assert entry.spec.truth_slope < 0
