import json

import numpy as np
import pytest
import torch

from axloc_trainer.dataset import SliceDatasetSpec, build_dataset
from axloc_trainer.formats import VolumeAnchors
from axloc_trainer.train import TrainConfig, train

# Toy volumes are written through the engine package (test-only bridge);
# production trainer code touches files, never axloc imports.
from axloc.phantom import PhantomSpec  # noqa: F401  (asserts axloc importable)
from axloc.volume_io import Volume, VolumeMeta, save_volume

from axloc_trainer.dataset import interpolated_positions


def write_toy_volume(path, num_slices, upper, lower, rows=20, cols=20,
                     spacing=0.5, seed=0):
    """AXV1 volume whose slices spatially encode their body position.

    Each slice carries a bright 2x2 block at the grid cell of its
    position class (10x10 cells cover classes 0..99), over a faint noise
    background. Structural, so a small CNN can actually learn it; a pure
    intensity code would need ~2% amplitude discrimination and does not
    train on CPU budgets.
    """
    from axloc_trainer.dataset import positions_to_classes

    positions = interpolated_positions(upper[0], upper[1], lower[0], lower[1],
                                       num_slices)
    classes = positions_to_classes(positions)
    rng = np.random.default_rng(seed)
    voxels = np.empty((num_slices, rows, cols), dtype=np.int16)
    for i, cls in enumerate(classes):
        row, col = (cls // 10) * 2, (cls % 10) * 2
        voxels[i] = rng.integers(-3, 4, size=(rows, cols), dtype=np.int16)
        voxels[i, row:row + 2, col:col + 2] = 80
    meta = VolumeMeta(num_slices=num_slices, rows=rows, cols=cols,
                      spacing_between_slices_mm=spacing,
                      pixel_spacing_mm=(0.8, 0.8), orientation="head_first")
    save_volume(Volume(meta=meta, voxels=voxels), path)
    return positions


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Two anchored 300-slice volumes; 200 training slices at stride 3."""
    root = tmp_path_factory.mktemp("toy")
    a = root / "vol_a.axv"
    b = root / "vol_b.axv"
    write_toy_volume(a, 300, (0, 18.9), (299, 28.0), spacing=0.52, seed=1)
    write_toy_volume(b, 300, (0, 12.6), (299, 40.0), spacing=1.56, seed=2)
    anchors = (
        VolumeAnchors(str(a), 0, 18.9, 299, 28.0),
        VolumeAnchors(str(b), 0, 12.6, 299, 40.0),
    )
    anchors_json = root / "anchors.json"
    anchors_json.write_text(json.dumps([
        {"volume": str(a), "upper": {"index": 0, "landmark": "superior_sternum"},
         "lower": {"index": 299, "landmark": "inferior_heart"}},
        {"volume": str(b), "upper": {"index": 0, "landmark": "hyoid_bone"},
         "lower": {"index": 299, "landmark": "superior_ilium"}},
    ]))
    return {"volumes": (a, b), "anchors": anchors, "anchors_json": anchors_json}


@pytest.fixture(scope="session")
def overfit_run(toy_corpus):
    """One shared training run on the 200-slice toy set (CPU-slow)."""
    torch.set_num_threads(1)
    images, labels = build_dataset(SliceDatasetSpec(anchors=toy_corpus["anchors"]))
    assert len(images) == 200
    config = TrainConfig(
        epochs=50,
        batch_size=16,
        seed=3,
        early_stop_accuracy=0.97,
        augment_zoom=False, augment_rotation=False, augment_shear=False,
        augment_hflip=False, augment_vflip=False,
    )
    result = train(images, labels, config)
    return {"result": result, "images": images, "labels": labels,
            "corpus": toy_corpus}
