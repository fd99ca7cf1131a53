import json

import numpy as np
import pytest

from axloc.volume_io import (
    BadMagicError,
    HeaderError,
    LengthMismatchError,
    MAGIC,
    PredictionFile,
    PredictionFormatError,
    TruncatedPayloadError,
    Volume,
    VolumeFormatError,
    VolumeMeta,
    load_predictions,
    load_volume,
    save_predictions,
    save_volume,
)


def make_volume(num_slices=4, rows=2, cols=2, seed=0, **meta_kwargs):
    meta_kwargs.setdefault("spacing_between_slices_mm", 0.8)
    meta_kwargs.setdefault("pixel_spacing_mm", (0.7, 0.7))
    meta = VolumeMeta(num_slices=num_slices, rows=rows, cols=cols, **meta_kwargs)
    voxels = np.random.default_rng(seed).integers(
        -1000, 2001, size=(num_slices, rows, cols), dtype=np.int16)
    return Volume(meta=meta, voxels=voxels)


def write_raw(path, header: dict, payload: bytes, magic: bytes = MAGIC):
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(payload)


GOOD_HEADER = {
    "dims": [4, 2, 2],
    "spacing_between_slices_mm": 0.8,
    "pixel_spacing_mm": [0.7, 0.7],
    "orientation": "head_first",
}
GOOD_PAYLOAD = bytes(4 * 2 * 2 * 2)


def test_round_trip_small_volume(tmp_path):
    volume = make_volume()
    path = tmp_path / "v.axv"
    save_volume(volume, path)
    loaded = load_volume(path)
    assert loaded.meta == volume.meta
    assert loaded.meta.num_slices == 4
    assert np.array_equal(loaded.voxels, volume.voxels)


def test_round_trip_property_randomized_volumes(tmp_path):
    rng = np.random.default_rng(11)
    for case in range(100):
        volume = make_volume(
            num_slices=int(rng.integers(1, 9)),
            rows=int(rng.integers(1, 6)),
            cols=int(rng.integers(1, 6)),
            seed=int(rng.integers(0, 2**31)),
            spacing_between_slices_mm=float(rng.uniform(0.1, 5.0)),
            pixel_spacing_mm=(float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2))),
            orientation=("head_first", "feet_first", "unknown")[case % 3],
        )
        path = tmp_path / f"v{case}.axv"
        save_volume(volume, path)
        loaded = load_volume(path)
        assert loaded.meta == volume.meta
        assert np.array_equal(loaded.voxels, volume.voxels)


def test_truncated_payload(tmp_path):
    path = tmp_path / "v.axv"
    save_volume(make_volume(), path)
    data = path.read_bytes()
    path.write_bytes(data[:-2])  # one voxel short
    with pytest.raises(TruncatedPayloadError):
        load_volume(path)


def test_overlong_payload(tmp_path):
    path = tmp_path / "v.axv"
    write_raw(path, GOOD_HEADER, GOOD_PAYLOAD + b"\x00\x00")
    with pytest.raises(LengthMismatchError):
        load_volume(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "v.axv"
    write_raw(path, GOOD_HEADER, GOOD_PAYLOAD, magic=b"NOPE")
    with pytest.raises(BadMagicError):
        load_volume(path)


def test_non_positive_spacing_names_field(tmp_path):
    path = tmp_path / "v.axv"
    header = dict(GOOD_HEADER, spacing_between_slices_mm=0.0)
    write_raw(path, header, GOOD_PAYLOAD)
    with pytest.raises(HeaderError) as err:
        load_volume(path)
    assert err.value.field == "spacing_between_slices_mm"


@pytest.mark.parametrize("mutate,field", [
    (lambda h: h.pop("dims"), "dims"),
    (lambda h: h.update(dims=[4, 2]), "dims"),
    (lambda h: h.update(dims=[4, 2, 0]), "dims"),
    (lambda h: h.update(dims=["4", 2, 2]), "dims"),
    (lambda h: h.pop("spacing_between_slices_mm"), "spacing_between_slices_mm"),
    (lambda h: h.update(spacing_between_slices_mm=-1.0), "spacing_between_slices_mm"),
    (lambda h: h.update(spacing_between_slices_mm="x"), "spacing_between_slices_mm"),
    (lambda h: h.pop("pixel_spacing_mm"), "pixel_spacing_mm"),
    (lambda h: h.update(pixel_spacing_mm=[0.7]), "pixel_spacing_mm"),
    (lambda h: h.update(pixel_spacing_mm=[0.7, 0.0]), "pixel_spacing_mm"),
    (lambda h: h.pop("orientation"), "orientation"),
    (lambda h: h.update(orientation="sideways"), "orientation"),
])
def test_every_header_field_corruption_rejected(tmp_path, mutate, field):
    header = {k: (list(v) if isinstance(v, list) else v) for k, v in GOOD_HEADER.items()}
    mutate(header)
    path = tmp_path / "v.axv"
    write_raw(path, header, GOOD_PAYLOAD)
    with pytest.raises(HeaderError) as err:
        load_volume(path)
    assert err.value.field == field


def test_undecodable_header(tmp_path):
    path = tmp_path / "v.axv"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write((5).to_bytes(4, "little"))
        fh.write(b"\xff\xfe{}!")
        fh.write(GOOD_PAYLOAD)
    with pytest.raises(HeaderError):
        load_volume(path)


def test_file_ending_inside_header(tmp_path):
    path = tmp_path / "v.axv"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write((1000).to_bytes(4, "little"))
        fh.write(b"{}")
    with pytest.raises(TruncatedPayloadError):
        load_volume(path)


def test_byte_flip_corruption_fails_or_differs(tmp_path):
    """Flipping any single byte must break loading or change the volume."""
    volume = make_volume(num_slices=3, rows=3, cols=3, seed=5)
    path = tmp_path / "v.axv"
    save_volume(volume, path)
    original = path.read_bytes()
    rng = np.random.default_rng(17)
    corrupt = tmp_path / "c.axv"
    for _ in range(60):
        offset = int(rng.integers(0, len(original)))
        flipped = bytearray(original)
        flipped[offset] ^= 1 << int(rng.integers(0, 8))
        corrupt.write_bytes(bytes(flipped))
        try:
            loaded = load_volume(corrupt)
        except VolumeFormatError:
            continue
        differs = (loaded.meta != volume.meta
                   or not np.array_equal(loaded.voxels, volume.voxels))
        assert differs, f"undetected corruption at offset {offset}"


def test_save_to_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_volume(make_volume(), tmp_path / "missing_dir" / "v.axv")


def test_meta_validation():
    with pytest.raises(ValueError):
        VolumeMeta(num_slices=0, rows=2, cols=2)
    with pytest.raises(ValueError):
        VolumeMeta(num_slices=1, rows=0, cols=2)
    with pytest.raises(HeaderError):
        VolumeMeta(num_slices=1, rows=2, cols=2, spacing_between_slices_mm=-1.0)
    with pytest.raises(ValueError):
        VolumeMeta(num_slices=1, rows=2, cols=2, orientation="up")


def test_volume_shape_must_match_meta():
    meta = VolumeMeta(num_slices=2, rows=2, cols=2)
    with pytest.raises(ValueError, match="shape"):
        Volume(meta=meta, voxels=np.zeros((2, 2, 3), dtype=np.int16))
    with pytest.raises(ValueError, match="int16"):
        Volume(meta=meta, voxels=np.zeros((2, 2, 2), dtype=np.int32))


def test_load_predictions_happy_path(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("slice_index,position\n0,10.0\n5,12.5\n")
    parsed = load_predictions(path)
    assert parsed.records == ((0, 10.0), (5, 12.5))


def test_load_predictions_sorts_rows(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("slice_index,position\n5,12.5\n0,10.0\n")
    assert load_predictions(path).records == ((0, 10.0), (5, 12.5))


def test_load_predictions_duplicate_index_reports_line(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("slice_index,position\n5,12.5\n5,13.0\n")
    with pytest.raises(PredictionFormatError) as err:
        load_predictions(path)
    assert err.value.line == 3
    assert "duplicate" in str(err.value)


def test_load_predictions_non_numeric_reports_line(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("slice_index,position\n0,abc\n")
    with pytest.raises(PredictionFormatError) as err:
        load_predictions(path)
    assert err.value.line == 2


def test_load_predictions_missing_header(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("0,10.0\n5,12.5\n")
    with pytest.raises(PredictionFormatError) as err:
        load_predictions(path)
    assert err.value.line == 1


def test_load_predictions_negative_index(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("slice_index,position\n-1,10.0\n")
    with pytest.raises(PredictionFormatError):
        load_predictions(path)


def test_save_predictions_round_trip(tmp_path):
    path = tmp_path / "p.csv"
    records = [(3, 12.345678), (0, 1.0), (7, 99.5)]
    save_predictions(records, path)
    parsed = load_predictions(path)
    assert [i for i, _ in parsed.records] == [0, 3, 7]
    by_index = parsed.to_dict()
    for i, p in records:
        assert by_index[i] == pytest.approx(p, abs=1e-6)
    # at least 3 fractional digits in the written text
    assert ",12.345678" in path.read_text()


def test_prediction_file_invariants():
    with pytest.raises(ValueError, match="unique"):
        PredictionFile(((0, 1.0), (0, 2.0)))
    with pytest.raises(ValueError, match="sorted"):
        PredictionFile(((3, 1.0), (0, 2.0)))
