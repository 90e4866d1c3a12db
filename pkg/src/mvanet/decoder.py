"""Top-down decoder: localization at level 5, refinement at every level,
FPN-style skip fusion, and per-level side outputs for deep supervision."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch
from torch import nn

from .attention import DEFAULT_WINDOWS
from .encoder import PyramidFeatures, _norm, check_stride_ladder
from .errors import ConfigError, GeometryError, PartitionError
from .geometry import PatchGrid, assemble, resize
from .mclm import MCLM
from .mcrm import MCRM, open_sigmoid, partition_views

STREAMS = ("local", "global", "attn")
LEVELS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class ViewLayout:
    """Which views travel through the network.  ``num_locals`` close-up views
    and optionally one distant view, stored [locals..., global] in the stream."""

    num_locals: int
    has_global: bool

    @property
    def multi(self) -> bool:
        return self.num_locals > 0 and self.has_global

    @property
    def num_views(self) -> int:
        return self.num_locals + int(self.has_global)

    @property
    def streams(self) -> Tuple[str, ...]:
        if self.multi:
            return STREAMS
        return ("local",) if self.num_locals else ("global",)


@dataclass
class SupervisionSet:
    """Side maps per decoder level plus the final prediction.

    ``local`` and ``global`` entries are logits; ``attn`` and ``final`` are
    probabilities.
    """

    levels: Dict[int, Dict[str, torch.Tensor]] = field(default_factory=dict)
    final: Optional[torch.Tensor] = None

    def __len__(self) -> int:
        return sum(len(v) for v in self.levels.values()) + (self.final is not None)


def to_stream_order(x: torch.Tensor, layout: ViewLayout) -> torch.Tensor:
    """Encoder batches are [global, locals...]; the decoder stream is [locals..., global]."""
    if not layout.multi:
        return x
    views = torch.chunk(x, layout.num_views, dim=0)
    return torch.cat([*views[1:], views[0]], dim=0)


def side_head(dim: int) -> nn.Conv2d:
    return nn.Conv2d(dim, 1, kernel_size=3, padding=1)


class Decoder(nn.Module):
    def __init__(
        self,
        encoder_channels: Sequence[int],
        strides: Sequence[int],
        dim: int = 64,
        heads: int = 4,
        windows: Sequence[int] = DEFAULT_WINDOWS,
        use_mclm: bool = True,
        use_mcrm: bool = True,
    ):
        super().__init__()
        check_stride_ladder(strides)
        if len(encoder_channels) != 5:
            raise ConfigError(f"need 5 encoder levels, got {len(encoder_channels)}")
        self.strides = tuple(strides)
        self.use_mclm = use_mclm
        self.use_mcrm = use_mcrm
        self.laterals = nn.ModuleList(nn.Conv2d(c, dim, kernel_size=1) for c in encoder_channels)
        self.smooth = nn.ModuleList(
            nn.Sequential(nn.Conv2d(dim, dim, 3, padding=1), _norm(dim), nn.ReLU()) for _ in range(4)
        )
        self.mclm = MCLM(dim, heads, windows) if use_mclm else None
        if use_mcrm:
            self.refiners = nn.ModuleList(MCRM(dim, heads, windows) for _ in LEVELS)
        else:
            # attention maps are still produced (and supervised) but never applied
            self.attn_heads = nn.ModuleList(nn.Conv2d(dim, 1, kernel_size=1) for _ in LEVELS)
        self.local_sides = nn.ModuleList(side_head(dim) for _ in LEVELS)
        self.global_sides = nn.ModuleList(side_head(dim) for _ in LEVELS)

    def forward(
        self, pyramid: PyramidFeatures, grid: PatchGrid, layout: ViewLayout
    ) -> Tuple[torch.Tensor, SupervisionSet]:
        if list(pyramid.strides) != list(self.strides):
            raise ConfigError(f"pyramid strides {pyramid.strides} do not match decoder plan {list(self.strides)}")
        if layout.num_locals and layout.num_locals != grid.count:
            raise GeometryError(f"{layout.num_locals} close-up views for a {grid.rows}x{grid.cols} grid")
        batch = pyramid.levels[0].shape[0]
        if batch % layout.num_views:
            raise PartitionError(f"pyramid batch {batch} is not a multiple of {layout.num_views} views")
        levels = [to_stream_order(lat(e), layout) for lat, e in zip(self.laterals, pyramid.levels)]

        d = levels[4]
        if self.mclm is not None and layout.multi:
            locals_, glob = partition_views(d, layout.num_locals)
            glob, locals_ = self.mclm(glob, locals_, grid)
            d = torch.cat([*locals_, glob], dim=0)

        supervision = SupervisionSet()
        for i in reversed(LEVELS):
            attn = None
            if layout.multi:
                if self.use_mcrm:
                    out = self.refiners[i - 1](d, grid)
                    d, attn = out.refined, out.attention_map
                else:
                    locals_, glob = partition_views(d, layout.num_locals)
                    size = (grid.rows * glob.shape[-2], grid.cols * glob.shape[-1])
                    attn = resize(open_sigmoid(self.attn_heads[i - 1](glob)), size)
            supervision.levels[i] = self._side_outputs(i, d, attn, grid, layout)
            if i > 1:
                skip = levels[i - 2]
                d = self.smooth[i - 2](resize(d, tuple(skip.shape[-2:])) + skip)
        return d, supervision

    def _side_outputs(self, i, d, attn, grid, layout) -> Dict[str, torch.Tensor]:
        sides = {}
        if layout.multi:
            locals_, glob = partition_views(d, layout.num_locals)
            sides["local"] = self.local_sides[i - 1](assemble(locals_, grid))
            sides["global"] = self.global_sides[i - 1](glob)
            sides["attn"] = attn
        elif layout.num_locals:
            sides["local"] = self.local_sides[i - 1](assemble(list(torch.chunk(d, layout.num_locals, dim=0)), grid))
        else:
            sides["global"] = self.global_sides[i - 1](d)
        return sides
