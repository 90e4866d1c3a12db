"""Pixel loss (BCE + boundary-weighted IoU) and the deep-supervised total."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable

import torch
import torch.nn.functional as F

from .decoder import LEVELS, STREAMS, SupervisionSet
from .errors import SupervisionError
from .geometry import resize

EPS = 1e-7
LAMBDA_GLOBAL = 0.3
LAMBDA_ATTN = 0.3


def boundary_weight(gt: torch.Tensor, kernel: int = 31, gain: float = 5.0) -> torch.Tensor:
    """1 + gain * |box(gt) - gt|; the box filter counts zero padding."""
    pad = kernel // 2
    # separable: a zero-padded box sum factors into row and column sums
    local_mean = F.avg_pool2d(gt, (kernel, 1), stride=1, padding=(pad, 0))
    local_mean = F.avg_pool2d(local_mean, (1, kernel), stride=1, padding=(0, pad))
    return 1.0 + gain * (local_mean - gt).abs()


def bce(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    pred = pred.clamp(EPS, 1.0 - EPS)
    return -(gt * pred.log() + (1.0 - gt) * (1.0 - pred).log()).mean()


def weighted_iou(
    pred: torch.Tensor, gt: torch.Tensor, weighted: bool = True, weight: torch.Tensor | None = None
) -> torch.Tensor:
    """Per-image 1 - (I + 1) / (U + 1), averaged over the batch.

    The +1 keeps a perfect prediction of an empty mask at zero loss.
    ``weight`` reuses a precomputed boundary weight.
    """
    pred = pred.clamp(EPS, 1.0 - EPS)
    if weight is not None:
        w = weight
    else:
        w = boundary_weight(gt) if weighted else torch.ones_like(gt)
    inter = (pred * gt * w).sum(dim=(2, 3))
    union = ((pred + gt - pred * gt) * w).sum(dim=(2, 3))
    return (1.0 - (inter + 1.0) / (union + 1.0)).mean()


def pixel_loss(
    pred: torch.Tensor, gt: torch.Tensor, weighted: bool = True, weight: torch.Tensor | None = None
) -> torch.Tensor:
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {tuple(pred.shape)} and target {tuple(gt.shape)} differ")
    return bce(pred, gt) + weighted_iou(pred, gt, weighted, weight)


@dataclass
class LossBreakdown:
    final: torch.Tensor
    levels: Dict[int, Dict[str, torch.Tensor]] = field(default_factory=dict)
    lambda_global: float = LAMBDA_GLOBAL
    lambda_attn: float = LAMBDA_ATTN
    total: torch.Tensor | None = None

    def as_floats(self) -> Dict[str, float]:
        out = {"total": self.total.item(), "l_f": self.final.item()}
        for i in sorted(self.levels, reverse=True):
            for stream, value in self.levels[i].items():
                out[f"l{i}_{stream}"] = value.item()
        return out


def combine(final, levels, lambda_global: float = LAMBDA_GLOBAL, lambda_attn: float = LAMBDA_ATTN):
    """total = l_f + sum_i (l_l + lambda_g * l_g + lambda_a * l_a)."""
    coef = {"local": 1.0, "global": lambda_global, "attn": lambda_attn}
    # accumulate in double so the weighted sum does not pick up float32 rounding
    total = final.double()
    for i in sorted(levels):
        for stream, value in levels[i].items():
            total = total + coef[stream] * value.double()
    return total.to(final.dtype)


def total_loss(
    supervision: SupervisionSet,
    gt: torch.Tensor,
    lambda_global: float = LAMBDA_GLOBAL,
    lambda_attn: float = LAMBDA_ATTN,
    streams: Iterable[str] = STREAMS,
    weighted: bool = True,
) -> LossBreakdown:
    """Deep-supervised loss.  Every listed stream must be present at all five levels."""
    if supervision.final is None:
        raise SupervisionError("missing side map: final prediction")
    size = tuple(gt.shape[-2:])
    weight = boundary_weight(gt) if weighted else torch.ones_like(gt)
    levels: Dict[int, Dict[str, torch.Tensor]] = {}
    for i in LEVELS:
        sides = supervision.levels.get(i, {})
        levels[i] = {}
        for stream in streams:
            side = sides.get(stream)
            if side is None:
                raise SupervisionError(f"missing side map: level {i} stream {stream}")
            if stream == "attn":
                prob = resize(side, size)
            else:
                prob = torch.sigmoid(resize(side, size))
            levels[i][stream] = pixel_loss(prob, gt, weighted, weight)
    final = pixel_loss(supervision.final, gt, weighted, weight)
    total = combine(final, levels, lambda_global, lambda_attn)
    return LossBreakdown(final, levels, lambda_global, lambda_attn, total)
