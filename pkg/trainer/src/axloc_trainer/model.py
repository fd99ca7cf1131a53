"""Slice position classifier.

Six 3x3 convolution + 2x2 max-pool blocks take the single-channel
256x256 slice down to 4x4, then two fully connected layers produce the
100-way position distribution.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .dataset import INPUT_SIZE, NUM_CLASSES

CONV_WIDTHS = (16, 32, 64, 64, 128, 128)
FC_WIDTH = 256


class SliceClassifier(nn.Module):
    def __init__(self):
        super().__init__()
        blocks = []
        channels = 1
        for width in CONV_WIDTHS:
            blocks += [nn.Conv2d(channels, width, kernel_size=3, padding=1),
                       nn.ReLU(inplace=True),
                       nn.MaxPool2d(2)]
            channels = width
        self.features = nn.Sequential(*blocks)
        spatial = INPUT_SIZE // 2 ** len(CONV_WIDTHS)
        self.classifier = nn.Sequential(
            nn.Flatten(),
            nn.Linear(channels * spatial * spatial, FC_WIDTH),
            nn.ReLU(inplace=True),
            nn.Linear(FC_WIDTH, NUM_CLASSES),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Raw class logits for a [N, 1, 256, 256] batch."""
        return self.classifier(self.features(x))

    @torch.no_grad()
    def predict_distribution(self, x: torch.Tensor) -> torch.Tensor:
        """Softmax-normalized 100-way position distribution."""
        self.eval()
        return torch.softmax(self.forward(x), dim=-1)

    @torch.no_grad()
    def predict_positions(self, x: torch.Tensor) -> torch.Tensor:
        """Continuous positions: argmax class center (class + 0.5)."""
        self.eval()
        return self.forward(x).argmax(dim=-1).float() + 0.5
