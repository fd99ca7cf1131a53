"""Train a slice classifier and export predictions for the engine."""

from __future__ import annotations

import argparse
import sys

from .dataset import SliceDatasetSpec, build_dataset
from .formats import load_anchors, load_landmarks
from .train import (
    TrainConfig,
    export_predictions,
    load_checkpoint,
    save_checkpoint,
    train,
)


def cmd_train(args) -> int:
    landmarks = load_landmarks(args.landmarks)
    anchors = load_anchors(args.anchors, landmarks)
    spec = SliceDatasetSpec(anchors=tuple(anchors), subsample_stride=args.stride)
    images, labels = build_dataset(spec)
    schedule = ((30, 1e-4), (10, 1e-5), (10, 1e-6)) if args.epochs == 50 else \
        ((args.epochs, 1e-4),)
    config = TrainConfig(
        epochs=args.epochs,
        lr_schedule=schedule,
        batch_size=args.batch_size,
        subsample_stride=args.stride,
        seed=args.seed,
        early_stop_accuracy=args.early_stop_accuracy,
        augment_zoom=not args.no_augment,
        augment_rotation=not args.no_augment,
        augment_shear=not args.no_augment,
        augment_hflip=not args.no_augment,
        augment_vflip=not args.no_augment,
    )
    print(f"training on {len(images)} slices", file=sys.stderr)
    result = train(images, labels, config)
    save_checkpoint(result.model, args.checkpoint)
    print(f"epochs {len(result.epoch_losses)} "
          f"final loss {result.epoch_losses[-1]:.4f} "
          f"accuracy {result.final_accuracy:.3f}", file=sys.stderr)
    return 0


def cmd_export(args) -> int:
    model = load_checkpoint(args.checkpoint)
    positions = export_predictions(model, args.volume, args.out)
    print(f"wrote {len(positions)} predictions to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="axloc-train")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from anchored volumes")
    p.add_argument("--anchors", required=True, help="anchor JSON document")
    p.add_argument("--landmarks", help="landmark table JSON override")
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--stride", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--early-stop-accuracy", type=float, default=None)
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="write per-slice predictions CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
