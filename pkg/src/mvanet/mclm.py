"""Multi-view complementary localization at the coarsest encoder level."""
from __future__ import annotations

from typing import List, Sequence, Tuple

import torch
from torch import nn

from .attention import (
    DEFAULT_WINDOWS,
    CrossAttentionBlock,
    MultiHeadCrossAttention,
    pooled_tokens,
    positional_encoding,
    tokenize,
    untokenize,
)
from .errors import GeometryError
from .geometry import PatchGrid, assemble, split_resized


class MCLM(nn.Module):
    """Global tokens attend over pooled tokens of the assembled close-up views;
    each close-up view then queries its own slice of the updated global tokens.

    The local branch is a bare cross attention with no residual.
    """

    def __init__(self, dim: int, heads: int = 4, windows: Sequence[int] = DEFAULT_WINDOWS):
        super().__init__()
        self.windows = tuple(windows)
        self.global_block = CrossAttentionBlock(dim, heads)
        self.local_attn = MultiHeadCrossAttention(dim, heads)

    def forward(
        self, e5_global: torch.Tensor, e5_locals: Sequence[torch.Tensor], grid: PatchGrid
    ) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        if len(e5_locals) != grid.count:
            raise GeometryError(f"{len(e5_locals)} local features for a {grid.rows}x{grid.cols} grid")
        b, c, h, w = e5_global.shape
        for m, loc in enumerate(e5_locals):
            if loc.shape != e5_global.shape:
                raise GeometryError(f"local feature {m} has shape {tuple(loc.shape)}, global has {tuple(e5_global.shape)}")

        unified = assemble(e5_locals, grid)
        kv = pooled_tokens(unified, self.windows)
        t_global = self.global_block(tokenize(e5_global), kv)
        new_global = untokenize(t_global, h, w)

        # partition the updated global tokens by patch position; one slice per view
        slices = torch.cat([tokenize(p) for p in split_resized(new_global, grid)], dim=1)
        pe = positional_encoding(h, w, c, dtype=e5_global.dtype, device=e5_global.device)
        queries = tokenize(torch.cat([loc + pe for loc in e5_locals], dim=0))
        t_locals = self.local_attn(queries, slices, slices)
        new_locals = list(torch.chunk(untokenize(t_locals, h, w), grid.count, dim=0))
        return new_global, new_locals
