"""Multi-view decomposition: distant view + non-overlapping close-up patches.

Patches are always ordered row-major (top-left first).  ``split`` and
``assemble`` are exact inverses and never interpolate.  When views are stacked
along the batch axis the layout is view-major: all ``B`` images of view 0,
then all ``B`` images of view 1, and so on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import torch
import torch.nn.functional as F

from .errors import GeometryError

SUPPORTED_PATCH_COUNTS = (4, 9, 16)


@dataclass(frozen=True)
class PatchGrid:
    """Row-major grid of ``rows x cols`` patches, each ``patch_h x patch_w`` pixels
    at image resolution.  ``split``/``assemble`` only use ``rows``/``cols`` so the
    same grid serves every feature level."""

    rows: int
    cols: int
    patch_h: int
    patch_w: int

    def __post_init__(self):
        for name in ("rows", "cols", "patch_h", "patch_w"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise GeometryError(f"PatchGrid.{name} must be a positive integer, got {v!r}")

    @classmethod
    def for_image(cls, height: int, width: int, rows: int, cols: int | None = None) -> "PatchGrid":
        cols = rows if cols is None else cols
        _check_divisible(height, rows, "height")
        _check_divisible(width, cols, "width")
        return cls(rows, cols, height // rows, width // cols)

    @property
    def count(self) -> int:
        return self.rows * self.cols

    @property
    def image_size(self) -> tuple[int, int]:
        return self.rows * self.patch_h, self.cols * self.patch_w


@dataclass
class ViewBundle:
    global_view: torch.Tensor
    local_views: List[torch.Tensor]
    grid: PatchGrid

    def stacked(self) -> torch.Tensor:
        """Views along the batch axis, ordered [global, local_1..local_M]."""
        return torch.cat([self.global_view, *self.local_views], dim=0)

    @property
    def num_views(self) -> int:
        return 1 + len(self.local_views)


def _check_divisible(size: int, parts: int, axis: str) -> None:
    if parts < 1 or size % parts != 0:
        raise GeometryError(f"{axis} {size} is not divisible by {parts}")


def split(x: torch.Tensor, grid: PatchGrid) -> List[torch.Tensor]:
    """Cut a (B, C, H, W) map into ``grid.count`` row-major patches."""
    if x.dim() != 4:
        raise GeometryError(f"expected a 4-axis map, got shape {tuple(x.shape)}")
    b, c, h, w = x.shape
    _check_divisible(h, grid.rows, "height")
    _check_divisible(w, grid.cols, "width")
    ph, pw = h // grid.rows, w // grid.cols
    return [
        x[:, :, r * ph:(r + 1) * ph, q * pw:(q + 1) * pw]
        for r in range(grid.rows)
        for q in range(grid.cols)
    ]


def assemble(patches: Sequence[torch.Tensor], grid: PatchGrid) -> torch.Tensor:
    """Place row-major patches back into one (B, C, rows*ph, cols*pw) map."""
    if len(patches) != grid.count:
        raise GeometryError(f"expected {grid.count} patches for a {grid.rows}x{grid.cols} grid, got {len(patches)}")
    shape = patches[0].shape
    for m, p in enumerate(patches):
        if p.dim() != 4 or p.shape != shape:
            raise GeometryError(f"patch {m} has shape {tuple(p.shape)}, expected {tuple(shape)}")
    rows = [torch.cat(list(patches[r * grid.cols:(r + 1) * grid.cols]), dim=3) for r in range(grid.rows)]
    return torch.cat(rows, dim=2)


def split_batch(x: torch.Tensor, parts: int) -> List[torch.Tensor]:
    """Partition a view-major batch into ``parts`` equal chunks."""
    if x.shape[0] % parts != 0:
        raise GeometryError(f"batch {x.shape[0]} is not divisible into {parts} views")
    return list(torch.chunk(x, parts, dim=0))


def resize(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def split_resized(x: torch.Tensor, grid: PatchGrid) -> List[torch.Tensor]:
    """``split`` that first upsamples to the next grid multiple when the map is
    too small to divide evenly (coarse levels of 3x3 / 4x4 grids)."""
    h, w = x.shape[-2:]
    if h % grid.rows or w % grid.cols:
        size = (grid.rows * math.ceil(h / grid.rows), grid.cols * math.ceil(w / grid.cols))
        x = resize(x, size)
    return split(x, grid)


def decompose(image: torch.Tensor, grid: PatchGrid) -> ViewBundle:
    """Distant view (bilinear resize to patch size) plus exact row-major crops."""
    if image.dim() != 4:
        raise GeometryError(f"expected a (B, C, H, W) image, got shape {tuple(image.shape)}")
    h, w = image.shape[-2:]
    _check_divisible(h, grid.rows, "height")
    _check_divisible(w, grid.cols, "width")
    if (h // grid.rows, w // grid.cols) != (grid.patch_h, grid.patch_w):
        raise GeometryError(
            f"image {h}x{w} does not match grid patches {grid.patch_h}x{grid.patch_w} "
            f"({grid.rows}x{grid.cols})"
        )
    local_views = split(image, grid)
    global_view = resize(image, (grid.patch_h, grid.patch_w))
    return ViewBundle(global_view, local_views, grid)
