"""Multi-view complementary refinement, applied at every decoder level."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import torch
from torch import nn

from .attention import DEFAULT_WINDOWS, CrossAttentionBlock, pooled_tokens, positional_encoding, tokenize, untokenize
from .errors import PartitionError
from .geometry import PatchGrid, assemble, resize, split, split_resized


@dataclass
class RefinementOutput:
    refined: torch.Tensor  # [local_1..local_M, global] along the batch axis
    attention_map: torch.Tensor  # (B, 1, rows*h, cols*w), strictly inside (0, 1)


def open_sigmoid(x: torch.Tensor) -> torch.Tensor:
    """Sigmoid kept strictly inside (0, 1) even where float rounding saturates."""
    eps = torch.finfo(x.dtype).eps
    return torch.sigmoid(x).clamp(eps, 1.0 - eps)


def usable_windows(windows: Sequence[int], side: int) -> Tuple[int, ...]:
    """Windows that fit inside a region; un-pooled tokens when none do."""
    kept = tuple(n for n in windows if n <= side)
    return kept or (1,)


def partition_views(d: torch.Tensor, num_locals: int) -> Tuple[List[torch.Tensor], torch.Tensor]:
    """Split a [locals..., global] batch into its views."""
    if d.shape[0] % (num_locals + 1) != 0:
        raise PartitionError(f"batch {d.shape[0]} is not a multiple of {num_locals} locals + 1 global")
    views = list(torch.chunk(d, num_locals + 1, dim=0))
    return views[:-1], views[-1]


class MCRM(nn.Module):
    def __init__(self, dim: int, heads: int = 4, windows: Sequence[int] = DEFAULT_WINDOWS):
        super().__init__()
        self.windows = tuple(windows)
        self.attn_conv = nn.Conv2d(dim, 1, kernel_size=1)
        self.block = CrossAttentionBlock(dim, heads)

    def token_attention(self, d_global: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
        return resize(open_sigmoid(self.attn_conv(d_global)), size)

    def modulate(self, locals_: Sequence[torch.Tensor], d_global: torch.Tensor, grid: PatchGrid):
        """Background suppression: returns (A, split(A * assemble(locals)))."""
        unified = assemble(locals_, grid)
        a = self.token_attention(d_global, tuple(unified.shape[-2:]))
        return a, split(a * unified, grid)

    def forward(self, d: torch.Tensor, grid: PatchGrid) -> RefinementOutput:
        locals_, d_global = partition_views(d, grid.count)
        h, w = locals_[0].shape[-2:]
        channels = d.shape[1]

        a, modulated = self.modulate(locals_, d_global, grid)
        stacked = torch.cat(modulated, dim=0)
        pe = positional_encoding(h, w, channels, dtype=d.dtype, device=d.device)
        tokens = tokenize(stacked)
        queries = tokenize(stacked + pe)

        regions = split_resized(d_global, grid)
        windows = usable_windows(self.windows, min(regions[0].shape[-2:]))
        kv = torch.cat([pooled_tokens(r, windows) for r in regions], dim=1)

        # batch axis is (view, image), so local m only sees tokens of region m
        t = self.block(tokens, kv, query=queries)
        new_locals = list(torch.chunk(untokenize(t, h, w), grid.count, dim=0))
        new_global = d_global + resize(assemble(new_locals, grid), tuple(d_global.shape[-2:]))
        return RefinementOutput(torch.cat([*new_locals, new_global], dim=0), a)
