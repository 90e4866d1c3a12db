"""Shared hierarchical feature extractor run over all views in one batch."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Protocol, Sequence

import torch
from torch import nn

from .errors import ConfigError
from .geometry import ViewBundle

DEFAULT_STRIDES = (4, 8, 16, 32, 32)
DEFAULT_WIDTHS = (32, 64, 128, 256, 256)


@dataclass
class PyramidFeatures:
    levels: List[torch.Tensor]  # E_1..E_5, batch ordered [global, local_1..local_M]
    strides: List[int]
    channels: List[int]


class Backbone(Protocol):
    strides: Sequence[int]
    channels: Sequence[int]

    def __call__(self, x: torch.Tensor) -> List[torch.Tensor]: ...


def _norm(c: int) -> nn.GroupNorm:
    # per-sample statistics keep views independent inside the shared batch;
    # at least four channels per group so 1x1 maps keep a usable gradient
    return nn.GroupNorm(math.gcd(c, max(1, min(8, c // 4))), c)


def conv_norm_act(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(cin, cout, 3, stride=stride, padding=1), _norm(cout), nn.ReLU())


class ResidualBlock(nn.Module):
    def __init__(self, c: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(c, c, 3, padding=1), _norm(c), nn.ReLU(), nn.Conv2d(c, c, 3, padding=1), _norm(c)
        )

    def forward(self, x):
        return torch.relu(x + self.body(x))


def check_stride_ladder(strides: Sequence[int]) -> None:
    if len(strides) != 5:
        raise ConfigError(f"need 5 pyramid strides, got {len(strides)}")
    first = strides[0]
    if first < 2 or first & (first - 1):
        raise ConfigError(f"first stride must be a power of two >= 2, got {first}")
    for lo, hi in zip(strides, strides[1:]):
        if hi not in (lo, 2 * lo):
            raise ConfigError(f"stride ladder {list(strides)} must stay or double per level")
    if strides[-1] != 32:
        raise ConfigError(f"deepest stride must be 32, got {strides[-1]}")


class ConvEncoder(nn.Module):
    """Five conv-residual stages.  With the default ladder (4, 8, 16, 32, 32)
    the last stage keeps stride 32 and only widens."""

    def __init__(self, widths: Sequence[int] = DEFAULT_WIDTHS, strides: Sequence[int] = DEFAULT_STRIDES, in_channels: int = 3):
        super().__init__()
        check_stride_ladder(strides)
        if len(widths) != 5:
            raise ConfigError(f"need 5 encoder widths, got {len(widths)}")
        self.strides = tuple(strides)
        self.channels = tuple(widths)

        stem = []
        cin = in_channels
        for _ in range(int(math.log2(strides[0]))):
            stem.append(conv_norm_act(cin, widths[0], stride=2))
            cin = widths[0]
        stages = [nn.Sequential(*stem, ResidualBlock(widths[0]))]
        for i in range(1, 5):
            step = strides[i] // strides[i - 1]
            stages.append(nn.Sequential(conv_norm_act(widths[i - 1], widths[i], stride=step), ResidualBlock(widths[i])))
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        out = []
        for stage in self.stages:
            x = stage(x)
            out.append(x)
        return out


def encode_views(views: torch.Tensor, backbone: Backbone) -> PyramidFeatures:
    h, w = views.shape[-2:]
    top = max(backbone.strides)
    if h % top or w % top:
        raise ConfigError(f"view size {h}x{w} must be divisible by {top}")
    return PyramidFeatures(list(backbone(views)), list(backbone.strides), list(backbone.channels))


def encode(bundle: ViewBundle, backbone: Backbone) -> PyramidFeatures:
    """Run every view of the bundle through one backbone call."""
    return encode_views(bundle.stacked(), backbone)
