"""Visual feature maps and pluggable feature providers.

The encoder consumes any spatial feature grid of shape (H*W, feature_dim)
with an even feature dimension; where the features come from (a precomputed
archive or the bundled trainable conv stub) is invisible to it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ValidationError


@dataclass
class VisualFeatureMap:
    """Spatial feature grid of shape (height*width, feature_dim)."""

    grid: torch.Tensor
    height: int
    width: int

    def __post_init__(self):
        if self.grid.dim() != 2:
            raise ValidationError("feature grid must be 2-dimensional (positions x features)")
        positions, dim = self.grid.shape
        if positions != self.height * self.width or positions < 1:
            raise ValidationError("grid rows must equal height*width (>= 1)")
        if dim % 2 != 0:
            raise ValidationError("feature_dim must be even (twice the model dimension)")
        if not torch.isfinite(self.grid).all():
            raise ValidationError("feature grid contains non-finite values")

    @property
    def feature_dim(self) -> int:
        return int(self.grid.shape[1])


def feature_map_from_array(array: np.ndarray, dtype: torch.dtype = torch.float64) -> VisualFeatureMap:
    """Build a feature map from an (H, W, F) or (H*W, F) numpy array."""
    if array.ndim == 3:
        h, w, f = array.shape
        grid = torch.as_tensor(array.reshape(h * w, f), dtype=dtype)
        return VisualFeatureMap(grid=grid, height=h, width=w)
    if array.ndim == 2:
        hw, _ = array.shape
        side = int(round(hw ** 0.5))
        if side * side == hw:
            return VisualFeatureMap(
                grid=torch.as_tensor(array, dtype=dtype), height=side, width=side
            )
        return VisualFeatureMap(grid=torch.as_tensor(array, dtype=dtype), height=hw, width=1)
    raise ValidationError("feature array must be 2- or 3-dimensional")


def load_feature_archive(
    path: str, dtype: torch.dtype = torch.float64
) -> dict[str, VisualFeatureMap]:
    """Load a .npz archive of per-case feature grids keyed by case id."""
    archive = np.load(path)
    return {case_id: feature_map_from_array(archive[case_id], dtype) for case_id in archive.files}


class ConvStubBackbone(nn.Module):
    """Tiny trainable stand-in for a pretrained visual backbone.

    Three strided conv blocks map a single- or multi-channel image to a
    (out_side*out_side, 2*model_dim) feature grid.
    """

    def __init__(self, in_channels: int = 1, model_dim: int = 64, out_side: int = 4,
                 dtype: torch.dtype = torch.float64):
        super().__init__()
        self.out_side = out_side
        width = 2 * model_dim
        self.blocks = nn.Sequential(
            nn.Conv2d(in_channels, 16, kernel_size=3, stride=2, padding=1, dtype=dtype),
            nn.ReLU(),
            nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1, dtype=dtype),
            nn.ReLU(),
            nn.Conv2d(32, width, kernel_size=3, stride=2, padding=1, dtype=dtype),
        )

    def forward(self, image: torch.Tensor) -> VisualFeatureMap:
        if image.dim() != 3:
            raise ValidationError("expected a (channels, height, width) image")
        out = self.blocks(image.unsqueeze(0))
        out = torch.nn.functional.adaptive_avg_pool2d(out, self.out_side).squeeze(0)
        grid = out.permute(1, 2, 0).reshape(self.out_side * self.out_side, -1)
        return VisualFeatureMap(grid=grid, height=self.out_side, width=self.out_side)
