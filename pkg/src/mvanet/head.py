"""View rearrangement and the full-resolution prediction head."""
from __future__ import annotations

import torch
from torch import nn

from .decoder import ViewLayout
from .errors import GeometryError
from .geometry import PatchGrid, assemble, resize
from .mcrm import partition_views


def smoothing_head(dim: int, layers: int = 3) -> nn.Sequential:
    blocks = []
    for _ in range(layers):
        blocks += [nn.Conv2d(dim, dim, 3, padding=1), nn.BatchNorm2d(dim), nn.ReLU()]
    return nn.Sequential(*blocks)


class ShallowStem(nn.Sequential):
    """Low-level cues from the full-resolution image at 1/2 scale."""

    def __init__(self, dim: int, in_channels: int = 3):
        super().__init__(
            nn.Conv2d(in_channels, dim, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(dim, dim, 3, padding=1),
        )


class RearrangementHead(nn.Module):
    def __init__(self, dim: int, use_vrm: bool = True):
        super().__init__()
        self.use_vrm = use_vrm
        self.smooth = smoothing_head(dim) if use_vrm else None
        self.out = nn.Conv2d(dim, 1, kernel_size=1)

    def merge(self, d1: torch.Tensor, grid: PatchGrid, layout: ViewLayout) -> torch.Tensor:
        """Assemble the close-up stream, smooth seams, add the distant stream."""
        if layout.num_locals:
            if layout.has_global:
                locals_, glob = partition_views(d1, layout.num_locals)
            else:
                locals_, glob = list(torch.chunk(d1, layout.num_locals, dim=0)), None
            x = assemble(locals_, grid)
            if self.smooth is not None:
                x = self.smooth(x)
            if glob is not None:
                x = x + resize(glob, tuple(x.shape[-2:]))
            return x
        return self.smooth(d1) if self.smooth is not None else d1

    def forward(
        self, d1: torch.Tensor, shallow: torch.Tensor, grid: PatchGrid, layout: ViewLayout, out_size
    ) -> torch.Tensor:
        """Pre-sigmoid logits at ``out_size``.

        The merged map is upsampled x2 to meet the shallow features, then
        interpolated the rest of the way before the 1x1 projection.
        """
        x = self.merge(d1, grid, layout)
        if layout.num_locals and tuple(shallow.shape[-2:]) != (2 * x.shape[-2], 2 * x.shape[-1]):
            raise GeometryError(
                f"shallow features {tuple(shallow.shape[-2:])} are not twice the assembled map {tuple(x.shape[-2:])}"
            )
        x = resize(x, tuple(shallow.shape[-2:])) + shallow
        return self.out(resize(x, tuple(out_size)))


def seam_discontinuity(logits: torch.Tensor, grid: PatchGrid) -> float:
    """Largest absolute jump across any interior patch boundary."""
    h, w = logits.shape[-2:]
    jumps = [torch.zeros(())]
    for q in range(1, grid.cols):
        c = q * w // grid.cols
        jumps.append((logits[..., c] - logits[..., c - 1]).abs().max())
    for r in range(1, grid.rows):
        c = r * h // grid.rows
        jumps.append((logits[..., c, :] - logits[..., c - 1, :]).abs().max())
    return float(torch.stack(jumps).max())
