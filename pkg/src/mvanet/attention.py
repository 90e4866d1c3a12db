"""Cross-attention building blocks shared by the localization and refinement modules.

Token sequences use the (N, B, C) layout.  Tokenization is raster-order
flattening of the spatial axes.
"""
from __future__ import annotations

import functools
import math
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError

DEFAULT_WINDOWS = (4, 8, 16)


def tokenize(x: torch.Tensor) -> torch.Tensor:
    """(B, C, H, W) -> (H*W, B, C)."""
    return x.flatten(2).permute(2, 0, 1)


def untokenize(t: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """(H*W, B, C) -> (B, C, H, W)."""
    n, b, c = t.shape
    if n != height * width:
        raise ConfigError(f"cannot unflatten {n} tokens to {height}x{width}")
    return t.permute(1, 2, 0).reshape(b, c, height, width)


def pool_cells(size: int, window: int) -> int:
    return -(-size // window)


def pooled_tokens(x: torch.Tensor, windows: Sequence[int] = DEFAULT_WINDOWS) -> torch.Tensor:
    """Non-overlapping average pooling at each window, tokenized and concatenated.

    A window that does not divide the map uses ceiling division; edge cells
    average only the pixels they actually cover.
    """
    if not windows:
        raise ConfigError("pooling needs at least one window")
    h, w = x.shape[-2:]
    tokens = []
    for n in windows:
        if n < 1:
            raise ConfigError(f"pooling window must be positive, got {n}")
        if h % n == 0 and w % n == 0:
            pooled = F.avg_pool2d(x, n, n)
        else:
            ph, pw = pool_cells(h, n) * n - h, pool_cells(w, n) * n - w
            sums = F.avg_pool2d(F.pad(x, (0, pw, 0, ph)), n, n, divisor_override=1)
            ones = F.pad(x.new_ones(1, 1, h, w), (0, pw, 0, ph))
            pooled = sums / F.avg_pool2d(ones, n, n, divisor_override=1)
        tokens.append(tokenize(pooled))
    return torch.cat(tokens, dim=0)


def pooled_token_count(height: int, width: int, windows: Sequence[int] = DEFAULT_WINDOWS) -> int:
    return sum(pool_cells(height, n) * pool_cells(width, n) for n in windows)


@functools.lru_cache(maxsize=64)
def _sinusoid_table(height: int, width: int, channels: int) -> np.ndarray:
    quarter = channels // 4
    freqs = 1.0 / (10000.0 ** (np.arange(quarter) / quarter))
    ys = np.arange(height)[:, None] * freqs  # (H, quarter)
    xs = np.arange(width)[:, None] * freqs  # (W, quarter)
    table = np.empty((channels, height, width))
    table[:quarter] = np.sin(ys).T[:, :, None]
    table[quarter:2 * quarter] = np.cos(ys).T[:, :, None]
    table[2 * quarter:3 * quarter] = np.sin(xs).T[:, None, :]
    table[3 * quarter:] = np.cos(xs).T[:, None, :]
    table.setflags(write=False)
    return table


def positional_encoding(height: int, width: int, channels: int, *, dtype=torch.float32, device=None) -> torch.Tensor:
    """Fixed 2D sinusoidal encoding of shape (1, C, H, W).

    Channel layout: [sin(y), cos(y), sin(x), cos(x)], C/4 frequencies each.
    """
    if channels % 4 != 0 or channels <= 0:
        raise ConfigError(f"positional encoding needs channels divisible by 4, got {channels}")
    table = _sinusoid_table(height, width, channels)
    return torch.as_tensor(np.array(table), dtype=dtype, device=device).unsqueeze(0)


def mhca(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    w_q: torch.Tensor,
    w_kv: torch.Tensor,
    w_out: torch.Tensor,
    heads: int,
    *,
    need_weights: bool = False,
):
    """Multi-head cross attention on (N, B, C) tokens.

    ``w_q`` is (C, C), ``w_kv`` is (C, 2C) with the key half first, ``w_out`` is
    (C, C).  Projections are right-multiplied: ``Q = q @ w_q``.
    """
    nq, b, c = q.shape
    nk = k.shape[0]
    if nk == 0:
        raise ConfigError("cross attention needs at least one key token")
    if v.shape[0] != nk:
        raise ConfigError(f"keys ({nk}) and values ({v.shape[0]}) differ in length")
    if c % heads != 0:
        raise ConfigError(f"model width {c} is not divisible by {heads} heads")
    d = c // heads
    qp = (q @ w_q).reshape(nq, b, heads, d)
    kp = (k @ w_kv[:, :c]).reshape(nk, b, heads, d)
    vp = (v @ w_kv[:, c:]).reshape(nk, b, heads, d)
    scores = torch.einsum("qbhd,kbhd->bhqk", qp, kp) / math.sqrt(d)
    weights = scores.softmax(dim=-1)
    out = torch.einsum("bhqk,kbhd->qbhd", weights, vp).reshape(nq, b, c) @ w_out
    if need_weights:
        return out, weights
    return out


class MultiHeadCrossAttention(nn.Module):
    def __init__(self, dim: int, heads: int = 4):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"model width {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        bound = 1.0 / math.sqrt(dim)
        self.w_q = nn.Parameter(torch.empty(dim, dim).uniform_(-bound, bound))
        self.w_kv = nn.Parameter(torch.empty(dim, 2 * dim).uniform_(-bound, bound))
        self.w_out = nn.Parameter(torch.empty(dim, dim).uniform_(-bound, bound))

    def forward(self, q, k, v, need_weights: bool = False):
        return mhca(q, k, v, self.w_q, self.w_kv, self.w_out, self.heads, need_weights=need_weights)


class FeedForward(nn.Sequential):
    def __init__(self, dim: int, expansion: int = 4):
        super().__init__(nn.Linear(dim, expansion * dim), nn.GELU(), nn.Linear(expansion * dim, dim))


class CrossAttentionBlock(nn.Module):
    """Post-sublayer normalization, exactly as written for the global branch:

        t = t + LN(MHCA(query, kv, kv))
        t = t + LN(FFN(t))

    This differs from the usual pre-norm transformer; the sublayer outputs are
    normalized *before* the residual addition.
    """

    def __init__(self, dim: int, heads: int = 4, eps: float = 1e-5):
        super().__init__()
        self.attn = MultiHeadCrossAttention(dim, heads)
        self.norm1 = nn.LayerNorm(dim, eps=eps)
        self.ffn = FeedForward(dim)
        self.norm2 = nn.LayerNorm(dim, eps=eps)

    def forward(self, t: torch.Tensor, kv: torch.Tensor, query: torch.Tensor | None = None) -> torch.Tensor:
        query = t if query is None else query
        t = t + self.norm1(self.attn(query, kv, kv))
        return t + self.norm2(self.ffn(t))
