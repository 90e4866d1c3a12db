"""Hot loops of the evaluation metrics, in numba and plain numpy.

Set ``MVANET_NUMBA=0`` to force the numpy path (also used automatically when
numba is not importable).  Both paths return identical results; see
``benchmarks/bench_kernels.py`` for the timing comparison.
"""
from __future__ import annotations

import os

import numpy as np
from scipy import ndimage

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUM_THRESHOLDS = 256

USE_NUMBA = numba is not None and os.environ.get("MVANET_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


# threshold histograms --------------------------------------------------------
#
# Threshold k (k = 0..255) is (k + 1) / 256 and a pixel is positive when
# pred >= threshold.  bin(p) = min(floor(256 p), 256) counts the thresholds a
# pixel passes, so it is positive at threshold k iff bin(p) > k.


def _threshold_counts_numpy(pred, gt):
    bins = np.minimum(np.floor(pred * NUM_THRESHOLDS), NUM_THRESHOLDS).astype(np.int64)
    fg = np.bincount(bins[gt], minlength=NUM_THRESHOLDS + 1)
    bg = np.bincount(bins[~gt], minlength=NUM_THRESHOLDS + 1)
    # positives at threshold k = pixels with bin > k
    tp = np.cumsum(fg[::-1])[::-1][1:]
    fp = np.cumsum(bg[::-1])[::-1][1:]
    return tp.astype(np.int64), fp.astype(np.int64)


def _threshold_counts_loop(pred, gt):
    fg = np.zeros(NUM_THRESHOLDS + 1, np.int64)
    bg = np.zeros(NUM_THRESHOLDS + 1, np.int64)
    h, w = pred.shape
    for i in range(h):
        for j in range(w):
            b = int(np.floor(pred[i, j] * NUM_THRESHOLDS))
            if b > NUM_THRESHOLDS:
                b = NUM_THRESHOLDS
            if gt[i, j]:
                fg[b] += 1
            else:
                bg[b] += 1
    tp = np.zeros(NUM_THRESHOLDS, np.int64)
    fp = np.zeros(NUM_THRESHOLDS, np.int64)
    run_fg = 0
    run_bg = 0
    for k in range(NUM_THRESHOLDS, 0, -1):
        run_fg += fg[k]
        run_bg += bg[k]
        tp[k - 1] = run_fg
        fp[k - 1] = run_bg
    return tp, fp


# nearest foreground ----------------------------------------------------------
#
# Exact Euclidean nearest-foreground search.  Ties go to the smallest column,
# then the smallest row, so results do not depend on traversal order.


def _nearest_foreground_numpy(gt):
    h, w = gt.shape
    big = np.int64(4 * (h + w) ** 2 + 1)
    rows = np.arange(h)
    # column pass: vertical offset and row of the nearest foreground in each column
    vdist = np.full((h, w), big, np.int64)
    vrow = np.zeros((h, w), np.int64)
    for q in range(w):
        fg_rows = np.flatnonzero(gt[:, q])
        if fg_rows.size == 0:
            continue
        d = np.abs(rows[:, None] - fg_rows[None, :])
        pick = np.argmin(d, axis=1)  # first hit = smaller row on ties
        vdist[:, q] = d[rows, pick] ** 2
        vrow[:, q] = fg_rows[pick]
    cols = np.arange(w)
    horiz = (cols[:, None] - cols[None, :]) ** 2  # (x, q)
    dist2 = np.empty((h, w), np.int64)
    iy = np.empty((h, w), np.int64)
    ix = np.empty((h, w), np.int64)
    for y in range(h):
        total = horiz + vdist[y][None, :]
        q = np.argmin(total, axis=1)  # smallest column on ties
        dist2[y] = total[cols, q]
        ix[y] = q
        iy[y] = vrow[y, q]
    return np.sqrt(dist2), iy, ix


def _nearest_foreground_loop(gt):
    h, w = gt.shape
    big = 4 * (h + w) ** 2 + 1
    vdist = np.full((h, w), big, np.int64)
    vrow = np.zeros((h, w), np.int64)
    for q in range(w):
        last = -1
        for y in range(h):  # downward sweep: nearest at or above
            if gt[y, q]:
                last = y
            if last >= 0:
                vdist[y, q] = (y - last) ** 2
                vrow[y, q] = last
        last = -1
        for y in range(h - 1, -1, -1):  # upward sweep: strictly closer below wins
            if gt[y, q]:
                last = y
            if last >= 0:
                d = (last - y) ** 2
                if d < vdist[y, q]:
                    vdist[y, q] = d
                    vrow[y, q] = last
    dist = np.empty((h, w), np.float64)
    iy = np.empty((h, w), np.int64)
    ix = np.empty((h, w), np.int64)
    for y in range(h):
        for x in range(w):
            best = big
            bq = 0
            for q in range(w):
                d = (x - q) ** 2 + vdist[y, q]
                if d < best:
                    best = d
                    bq = q
            dist[y, x] = np.sqrt(best)
            ix[y, x] = bq
            iy[y, x] = vrow[y, bq]
    return dist, iy, ix


# same-size convolution with zero padding --------------------------------------


def _convolve_numpy(img, kernel):
    return ndimage.convolve(img, kernel, mode="constant", cval=0.0)


def _convolve_loop(img, kernel):
    h, w = img.shape
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    out = np.zeros((h, w), np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for a in range(kh):
                yy = y + ch - a
                if yy < 0 or yy >= h:
                    continue
                for b in range(kw):
                    xx = x + cw - b
                    if 0 <= xx < w:
                        acc += kernel[a, b] * img[yy, xx]
            out[y, x] = acc
    return out


NUMPY_KERNELS = {
    "threshold_counts": _threshold_counts_numpy,
    "nearest_foreground": _nearest_foreground_numpy,
    "convolve": _convolve_numpy,
}

if numba is not None:
    NUMBA_KERNELS = {
        "threshold_counts": numba.njit(cache=True)(_threshold_counts_loop),
        "nearest_foreground": numba.njit(cache=True)(_nearest_foreground_loop),
        "convolve": numba.njit(cache=True)(_convolve_loop),
    }
else:  # pragma: no cover
    NUMBA_KERNELS = {}

ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
BACKEND = "numba" if USE_NUMBA else "numpy"


def threshold_counts(pred: np.ndarray, gt: np.ndarray):
    """True and false positives at each of the 256 thresholds."""
    return ACTIVE["threshold_counts"](np.ascontiguousarray(pred, np.float64), np.ascontiguousarray(gt, np.bool_))


def nearest_foreground(gt: np.ndarray):
    """(distance, row index, column index) of the nearest foreground pixel."""
    return ACTIVE["nearest_foreground"](np.ascontiguousarray(gt, np.bool_))


def convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return ACTIVE["convolve"](np.ascontiguousarray(img, np.float64), np.ascontiguousarray(kernel, np.float64))
