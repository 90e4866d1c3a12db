"""Max F-measure, weighted F-measure, S-measure, mean E-measure and MAE.

Predictions are probability maps in [0, 1]; ground truths are binary.  The F
and E sweeps use the 256 thresholds (k + 1) / 256 with ``pred >= t``.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Sequence

import numpy as np

from . import _kernels
from .errors import MetricsError

BETA2 = 0.3
ALPHA = 0.5
EPS = np.finfo(np.float64).eps


@dataclass
class MetricsReport:
    f_max: float
    f_weighted: float
    s_measure: float
    e_measure: float
    mae: float
    images_evaluated: int
    throughput: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def write_kv(self, path) -> None:
        lines = [f"{k}={v}" for k, v in self.as_dict().items()]
        Path(path).write_text("\n".join(lines) + "\n")

    def write_table(self, path) -> None:
        row = self.as_dict()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t")
            writer.writerow(list(row))
            writer.writerow(list(row.values()))

    @classmethod
    def read_kv(cls, path) -> "MetricsReport":
        fields = dict(line.split("=", 1) for line in Path(path).read_text().splitlines() if line)
        return cls(
            **{k: float(v) for k, v in fields.items() if k != "images_evaluated"},
            images_evaluated=int(fields["images_evaluated"]),
        )


def _as_2d(x, name: str) -> np.ndarray:
    arr = x.detach().cpu().numpy() if hasattr(x, "detach") else np.asarray(x)
    arr = np.asarray(arr, dtype=np.float64)
    while arr.ndim > 2 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise MetricsError(f"{name} must be a single-channel map, got shape {arr.shape}")
    return arr


def _validate(pred, gt):
    pred = _as_2d(pred, "prediction")
    gt = _as_2d(gt, "ground truth")
    if pred.shape != gt.shape:
        raise MetricsError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    if not np.all((gt == 0) | (gt == 1)):
        raise MetricsError("ground truth must be binary (values 0 and 1)")
    if not np.all(np.isfinite(pred)) or pred.min() < 0 or pred.max() > 1:
        raise MetricsError("prediction values must lie in [0, 1]")
    return pred, gt.astype(bool)


# F-measure curve and mean E-measure from per-threshold counts ------------------


def f_curve(tp: np.ndarray, fp: np.ndarray, num_fg: int, beta2: float = BETA2) -> np.ndarray:
    tp = tp.astype(np.float64)
    positives = tp + fp
    precision = np.divide(tp, positives, out=np.zeros_like(tp), where=positives > 0)
    recall = tp / num_fg if num_fg > 0 else np.zeros_like(tp)
    num = (1 + beta2) * precision * recall
    den = beta2 * precision + recall
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def e_curve(tp: np.ndarray, fp: np.ndarray, num_fg: int, num_pixels: int) -> np.ndarray:
    tp = tp.astype(np.float64)
    fp = fp.astype(np.float64)
    positives = tp + fp
    if num_fg == 0:
        return 1.0 - positives / num_pixels
    if num_fg == num_pixels:
        return positives / num_pixels
    mean_pred = positives / num_pixels
    mean_gt = num_fg / num_pixels
    fn = num_fg - tp
    tn = num_pixels - positives - fn
    total = np.zeros_like(tp)
    # each (prediction, truth) combination has a single enhanced-alignment value
    for count, a, b in (
        (tp, 1 - mean_pred, 1 - mean_gt),
        (fp, 1 - mean_pred, -mean_gt),
        (fn, -mean_pred, 1 - mean_gt),
        (tn, -mean_pred, -mean_gt),
    ):
        align = 2 * a * b / (a * a + b * b + EPS)
        total += count * (align + 1) ** 2 / 4
    return total / num_pixels


# weighted F-measure ------------------------------------------------------------


def _gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    r = (size - 1) / 2
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    k = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    k[k < EPS * k.max()] = 0
    return k / k.sum()


_GAUSS = _gaussian_kernel()


def weighted_f_measure(pred: np.ndarray, gt: np.ndarray, beta2: float = BETA2) -> float:
    if not gt.any():
        return 0.0
    err = np.abs(pred - gt)
    if gt.all():
        dist = np.zeros(gt.shape)
        spread = err
    else:
        dist, iy, ix = _kernels.nearest_foreground(gt)
        # pixel dependency: background pixels inherit the error of their nearest foreground pixel
        spread = err[iy, ix]
        spread[gt] = err[gt]
    blurred = _kernels.convolve(spread, _GAUSS)
    dependent = np.where(gt & (blurred < err), blurred, err)
    importance = np.where(gt, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    weighted_err = dependent * importance
    tp_w = gt.sum() - weighted_err[gt].sum()
    fp_w = weighted_err[~gt].sum()
    recall = 1.0 - weighted_err[gt].mean()
    precision = tp_w / (tp_w + fp_w + EPS)
    return float((1 + beta2) * recall * precision / (recall + beta2 * precision + EPS))


# S-measure ---------------------------------------------------------------------


def _object_score(x: np.ndarray, mask: np.ndarray) -> float:
    vals = x[mask]
    mu = vals.mean()
    sigma = vals.std(ddof=1) if vals.size > 1 else 0.0
    return 2 * mu / (mu * mu + 1 + sigma + EPS)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    x, y = pred.mean(), gt.mean()
    denom = max(n - 1, 1)
    sx = ((pred - x) ** 2).sum() / denom
    sy = ((gt - y) ** 2).sum() / denom
    sxy = ((pred - x) * (gt - y)).sum() / denom
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    return 1.0 if beta == 0 else 0.0


def s_measure(pred: np.ndarray, gt: np.ndarray, alpha: float = ALPHA) -> float:
    mean_gt = gt.mean()
    if mean_gt == 0:
        return float(1 - pred.mean())
    if mean_gt == 1:
        return float(pred.mean())
    gtf = gt.astype(np.float64)
    obj = mean_gt * _object_score(pred * gtf, gt) + (1 - mean_gt) * _object_score((1 - pred) * (1 - gtf), ~gt)

    h, w = gt.shape
    cy, cx = np.argwhere(gt).mean(axis=0).round()  # round half to even
    cx, cy = int(cx) + 1, int(cy) + 1
    area = h * w
    w1 = cx * cy / area
    w2 = cy * (w - cx) / area
    w3 = (h - cy) * cx / area
    w4 = 1 - w1 - w2 - w3
    region = (
        w1 * _ssim(pred[:cy, :cx], gtf[:cy, :cx])
        + w2 * _ssim(pred[:cy, cx:], gtf[:cy, cx:])
        + w3 * _ssim(pred[cy:, :cx], gtf[cy:, :cx])
        + w4 * _ssim(pred[cy:, cx:], gtf[cy:, cx:])
    )
    return float(max(0.0, alpha * obj + (1 - alpha) * region))


# aggregation -------------------------------------------------------------------


def image_scores(pred, gt) -> Dict[str, object]:
    pred, gt = _validate(pred, gt)
    tp, fp = _kernels.threshold_counts(pred, gt)
    num_fg = int(gt.sum())
    return {
        "f_curve": f_curve(tp, fp, num_fg),
        "e_curve": e_curve(tp, fp, num_fg, gt.size),
        "f_weighted": weighted_f_measure(pred, gt),
        "s_measure": s_measure(pred, gt),
        "mae": float(np.abs(pred - gt).mean()),
    }


def compute_all(preds: Sequence, gts: Sequence) -> MetricsReport:
    """Dataset-level report.  The F curve is averaged over images before the
    max is taken; the other metrics are per-image means."""
    if len(preds) == 0:
        raise MetricsError("no predictions to evaluate")
    if len(preds) != len(gts):
        raise MetricsError(f"{len(preds)} predictions but {len(gts)} ground truths")
    scores = [image_scores(p, g) for p, g in zip(preds, gts)]
    return MetricsReport(
        f_max=float(np.mean([s["f_curve"] for s in scores], axis=0).max()),
        f_weighted=float(np.mean([s["f_weighted"] for s in scores])),
        s_measure=float(np.mean([s["s_measure"] for s in scores])),
        e_measure=float(np.mean([s["e_curve"] for s in scores])),
        mae=float(np.mean([s["mae"] for s in scores])),
        images_evaluated=len(scores),
    )
