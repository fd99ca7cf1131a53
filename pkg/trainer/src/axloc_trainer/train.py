"""Training loop, checkpoints, and prediction export."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .dataset import resize_slices
from .formats import read_volume, write_predictions_csv
from .model import SliceClassifier


@dataclass(frozen=True)
class TrainConfig:
    """Staged-schedule training settings.

    lr_schedule is a sequence of (epochs, learning rate) segments whose
    epoch counts must sum to epochs. early_stop_accuracy optionally ends
    training once the running train accuracy reaches the target, for
    CPU-bound sanity runs.
    """

    epochs: int = 50
    lr_schedule: tuple[tuple[int, float], ...] = ((30, 1e-4), (10, 1e-5), (10, 1e-6))
    batch_size: int = 16
    augment_zoom: bool = True
    augment_rotation: bool = True
    augment_shear: bool = True
    augment_hflip: bool = True
    augment_vflip: bool = True
    subsample_stride: int = 3
    seed: int = 0
    early_stop_accuracy: float | None = None

    def __post_init__(self):
        if sum(n for n, _ in self.lr_schedule) != self.epochs:
            raise ValueError(
                f"lr_schedule epochs {[n for n, _ in self.lr_schedule]} "
                f"must sum to epochs={self.epochs}"
            )

    def epoch_lr(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index."""
        consumed = 0
        for count, lr in self.lr_schedule:
            consumed += count
            if epoch < consumed:
                return lr
        return self.lr_schedule[-1][1]


@dataclass
class TrainResult:
    model: SliceClassifier
    epoch_losses: list[float] = field(default_factory=list)
    epoch_accuracies: list[float] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.epoch_accuracies[-1]


def _augmenter(config: TrainConfig):
    """Mild affine augmentation per the configured toggles."""
    from torchvision import transforms

    ops = []
    degrees = 10.0 if config.augment_rotation else 0.0
    shear = 5.0 if config.augment_shear else None
    scale = (0.9, 1.1) if config.augment_zoom else None
    if degrees or shear or scale:
        ops.append(transforms.RandomAffine(degrees=degrees, shear=shear, scale=scale))
    if config.augment_hflip:
        ops.append(transforms.RandomHorizontalFlip())
    if config.augment_vflip:
        ops.append(transforms.RandomVerticalFlip())
    return transforms.Compose(ops) if ops else None


def train(images: torch.Tensor, labels: torch.Tensor,
          config: TrainConfig = TrainConfig()) -> TrainResult:
    """Train the classifier with Adam and categorical cross-entropy."""
    if len(images) == 0:
        raise ValueError("training set is empty")
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images vs {labels.shape[0]} labels")

    torch.manual_seed(config.seed)
    model = SliceClassifier()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.epoch_lr(0))
    loss_fn = nn.CrossEntropyLoss()
    augment = _augmenter(config)
    generator = torch.Generator().manual_seed(config.seed)
    result = TrainResult(model=model)

    for epoch in range(config.epochs):
        lr = config.epoch_lr(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        order = torch.randperm(len(images), generator=generator)
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            x = images[batch]
            if augment is not None:
                x = augment(x)
            y = labels[batch]
            optimizer.zero_grad()
            logits = model(x)
            loss = loss_fn(logits, y)
            loss.backward()
            optimizer.step()
            total_loss += loss.item() * len(batch)
            correct += int((logits.argmax(dim=-1) == y).sum())
        result.epoch_losses.append(total_loss / len(order))
        result.epoch_accuracies.append(correct / len(order))
        if (config.early_stop_accuracy is not None
                and result.epoch_accuracies[-1] >= config.early_stop_accuracy):
            break
    return result


def save_checkpoint(model: SliceClassifier, path) -> None:
    torch.save({"format": "axloc-trainer/1", "state_dict": model.state_dict()}, path)


def load_checkpoint(path) -> SliceClassifier:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != "axloc-trainer/1":
        raise ValueError(f"unrecognized checkpoint format in {path}")
    model = SliceClassifier()
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def export_predictions(model: SliceClassifier, volume_path, out_path,
                       batch_size: int = 32) -> np.ndarray:
    """Predict every slice of a volume and write the engine's CSV."""
    volume = read_volume(volume_path)
    positions = np.empty(volume.num_slices, dtype=np.float64)
    for start in range(0, volume.num_slices, batch_size):
        stack = resize_slices(volume.voxels[start:start + batch_size])
        positions[start:start + len(stack)] = model.predict_positions(stack).numpy()
    write_predictions_csv(positions, out_path)
    return positions


def export_onnx(model: SliceClassifier, path) -> None:
    """Optional interchange-format export; needs the onnx package."""
    example = torch.zeros(1, 1, 256, 256)
    torch.onnx.export(model, (example,), str(path),
                      input_names=["slice"], output_names=["logits"])
