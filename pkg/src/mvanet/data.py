"""Synthetic thin-structure dataset, on-disk layout, and training augmentations.

Layout of a dataset root::

    images/<id>.ppm   8-bit RGB
    masks/<id>.pgm    8-bit grayscale, 0 / 255
    manifest.txt      id<TAB>image_path<TAB>mask_path, paths relative to the root
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, ImageDraw

from .errors import DataError

SHAPE_KINDS = ("lattice", "spokes", "ring")
# the first shape of every sample is a 1 px stroke; later shapes draw uniformly from these
STROKE_WIDTHS = (1, 2, 3)
THIN_WIDTH = 1
CROP_AREA = (0.75, 1.0)
MAX_ROTATION = 15.0


@dataclass
class ShapeSpec:
    kind: str
    width: int
    params: dict = field(default_factory=dict)


@dataclass
class Sample:
    image: np.ndarray  # (1, 3, H, W) float32 in [0, 1]
    mask: np.ndarray  # (1, 1, H, W) float32 in {0, 1}
    id: str
    shapes: List[ShapeSpec] = field(default_factory=list)

    def tensors(self) -> Tuple[torch.Tensor, torch.Tensor]:
        return torch.from_numpy(self.image), torch.from_numpy(self.mask)


# shape rasterization -----------------------------------------------------------


def _draw_lattice(draw: ImageDraw.ImageDraw, size: int, spec: ShapeSpec) -> None:
    top, left, bottom, right = spec.params["box"]
    w = spec.width
    for x in spec.params["xs"]:
        draw.rectangle([x, top, x + w - 1, bottom], fill=255)
    for y in spec.params["ys"]:
        draw.rectangle([left, y, right, y + w - 1], fill=255)


def _draw_spokes(draw: ImageDraw.ImageDraw, size: int, spec: ShapeSpec) -> None:
    cy, cx = spec.params["center"]
    r0, r1 = spec.params["radii"]
    for a in spec.params["angles"]:
        p0 = (cx + r0 * math.cos(a), cy + r0 * math.sin(a))
        p1 = (cx + r1 * math.cos(a), cy + r1 * math.sin(a))
        draw.line([p0, p1], fill=255, width=spec.width)


def _draw_ring(draw: ImageDraw.ImageDraw, size: int, spec: ShapeSpec) -> None:
    cy, cx = spec.params["center"]
    for ry, rx in spec.params["radii"]:
        draw.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], outline=255, width=spec.width)


_DRAWERS = {"lattice": _draw_lattice, "spokes": _draw_spokes, "ring": _draw_ring}


def render_shape(spec: ShapeSpec, size: int) -> np.ndarray:
    """Exact binary raster of one shape."""
    canvas = Image.new("L", (size, size), 0)
    _DRAWERS[spec.kind](ImageDraw.Draw(canvas), size, spec)
    return np.asarray(canvas) > 0


def _random_shape(rng: np.random.Generator, size: int, width: int) -> ShapeSpec:
    kind = SHAPE_KINDS[rng.integers(len(SHAPE_KINDS))]
    if kind == "lattice":
        span = rng.uniform(0.35, 0.7) * size
        top = int(rng.uniform(0, size - span))
        left = int(rng.uniform(0, size - span))
        bottom, right = top + int(span), left + int(span)
        pitch = int(rng.integers(max(6, size // 32), max(8, size // 10)))
        params = {
            "box": (top, left, bottom, right),
            "xs": list(range(left, right - width + 1, pitch)),
            "ys": list(range(top, bottom - width + 1, pitch)),
        }
    elif kind == "spokes":
        r1 = rng.uniform(0.2, 0.4) * size
        cy, cx = (float(v) for v in rng.uniform(r1, size - r1, size=2))
        n = int(rng.integers(5, 13))
        phase = rng.uniform(0, 2 * math.pi)
        params = {
            "center": (cy, cx),
            "radii": (0.15 * r1, r1),
            "angles": [phase + 2 * math.pi * k / n for k in range(n)],
        }
    else:
        r = rng.uniform(0.12, 0.35) * size
        cy, cx = (float(v) for v in rng.uniform(r + 2, size - r - 2, size=2))
        rings = int(rng.integers(1, 4))
        params = {
            "center": (cy, cx),
            "radii": [(r * f * rng.uniform(0.8, 1.0), r * f) for f in np.linspace(1.0, 0.45, rings)],
        }
    return ShapeSpec(kind, int(width), params)


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, size=(1, 3, 8, 8))
    smooth = F.interpolate(torch.from_numpy(coarse), size=(size, size), mode="bilinear", align_corners=False)
    fine = rng.normal(0.0, 0.05, size=(1, 3, size, size))
    return np.clip(0.25 + 0.4 * smooth.numpy() + fine, 0.0, 1.0)


def make_sample(seed: int, index: int, size: int) -> Sample:
    rng = np.random.default_rng([seed, index])
    count = int(rng.integers(1, 4))
    widths = [THIN_WIDTH] + [int(rng.choice(STROKE_WIDTHS)) for _ in range(count - 1)]
    shapes = [_random_shape(rng, size, w) for w in widths]
    mask = np.zeros((size, size), bool)
    for spec in shapes:
        mask |= render_shape(spec, size)

    image = _background(rng, size)
    color = rng.uniform(0.0, 1.0, size=3)
    # keep the object distinguishable from the local background
    bg_mean = image[0, :, mask].mean(axis=0) if mask.any() else image.mean(axis=(0, 2, 3))
    color = np.where(np.abs(color - bg_mean) < 0.35, np.where(bg_mean > 0.5, 0.05, 0.95), color)
    texture = rng.normal(0.0, 0.03, size=(3, size, size))
    fg = np.clip(color[:, None, None] + texture, 0.0, 1.0)
    image[0] = np.where(mask[None], fg, image[0])
    return Sample(
        image=image.astype(np.float32),
        mask=mask[None, None].astype(np.float32),
        id=f"syn_{seed}_{index:05d}",
        shapes=shapes,
    )


def generate_synthetic(seed: int, count: int, size: int) -> List[Sample]:
    """Deterministic thin-structure samples; one derived generator per sample."""
    if not isinstance(size, (int, np.integer)) or size < 64 or size % 64 != 0:
        raise DataError(f"size must be a positive multiple of 64, got {size}")
    if count < 1:
        raise DataError(f"count must be at least 1, got {count}")
    samples = []
    for i in range(count):
        sample = make_sample(seed, i, int(size))
        attempt = 1
        while not sample.mask.any():  # every shape kind draws something; guard anyway
            sample = make_sample(seed + 7919 * attempt, i, int(size))
            attempt += 1
        samples.append(sample)
    return samples


# augmentation ------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentParams:
    flip: bool
    crop: Tuple[int, int, int, int]  # top, left, height, width
    angle: float  # degrees, counter-clockwise in image coordinates (x right, y down)


def draw_params(rng: np.random.Generator, height: int, width: int) -> AugmentParams:
    flip = bool(rng.random() < 0.5)
    area = rng.uniform(*CROP_AREA)
    side = math.sqrt(area)
    ch, cw = max(1, round(side * height)), max(1, round(side * width))
    top = int(rng.integers(0, height - ch + 1))
    left = int(rng.integers(0, width - cw + 1))
    angle = float(rng.uniform(-MAX_ROTATION, MAX_ROTATION))
    return AugmentParams(flip, (top, left, ch, cw), angle)


def hflip(sample: Sample) -> Sample:
    return Sample(
        np.ascontiguousarray(sample.image[..., ::-1]), np.ascontiguousarray(sample.mask[..., ::-1]), sample.id, sample.shapes
    )


def _rotation_grid(height: int, width: int, angle: float, dtype) -> torch.Tensor:
    t = math.radians(angle)
    c, s = math.cos(t), math.sin(t)
    # output offset -> input offset is R(-angle); convert through normalized coordinates
    theta = torch.tensor(
        [[c, s * height / width, 0.0], [-s * width / height, c, 0.0]], dtype=dtype
    ).unsqueeze(0)
    return F.affine_grid(theta, [1, 1, height, width], align_corners=False)


def apply_params(sample: Sample, params: AugmentParams) -> Sample:
    if params.flip:
        sample = hflip(sample)
    image, mask = (torch.from_numpy(np.ascontiguousarray(a)).double() for a in (sample.image, sample.mask))
    h, w = image.shape[-2:]
    top, left, ch, cw = params.crop
    image = F.interpolate(image[..., top:top + ch, left:left + cw], size=(h, w), mode="bilinear", align_corners=False)
    mask = F.interpolate(mask[..., top:top + ch, left:left + cw], size=(h, w), mode="nearest-exact")
    if params.angle:
        grid = _rotation_grid(h, w, params.angle, image.dtype)
        image = F.grid_sample(image, grid, mode="bilinear", padding_mode="zeros", align_corners=False)
        mask = F.grid_sample(mask, grid, mode="nearest", padding_mode="zeros", align_corners=False)
    mask = (mask > 0.5).float()
    return Sample(image.clamp(0, 1).float().numpy(), mask.numpy(), sample.id, sample.shapes)


def transform_point(params: AugmentParams, y: float, x: float, height: int, width: int) -> Tuple[float, float]:
    """Where pixel (y, x) of the source lands after ``apply_params``."""
    if params.flip:
        x = width - 1 - x
    top, left, ch, cw = params.crop
    y = (y - top + 0.5) * height / ch - 0.5
    x = (x - left + 0.5) * width / cw - 0.5
    cy, cx = (height - 1) / 2, (width - 1) / 2
    t = math.radians(params.angle)
    dx, dy = x - cx, y - cy
    return cy + math.sin(t) * dx + math.cos(t) * dy, cx + math.cos(t) * dx - math.sin(t) * dy


def augment(sample: Sample, seed: int, params: AugmentParams | None = None) -> Sample:
    """Random flip, crop-and-resize and rotation with identical geometry for image and mask."""
    h, w = sample.image.shape[-2:]
    rng = np.random.default_rng(seed)
    if params is not None:
        return apply_params(sample, params)
    out = apply_params(sample, draw_params(rng, h, w))
    for _ in range(10):
        if out.mask.any() or not sample.mask.any():
            break
        out = apply_params(sample, draw_params(rng, h, w))  # degenerate draw lost the object
    return out


# file I/O ----------------------------------------------------------------------


def read_image(path) -> np.ndarray:
    """(1, 3, H, W) float32 in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1)[None])


def read_mask(path) -> np.ndarray:
    """(1, 1, H, W) float32 in {0, 1}."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read mask {path}: {exc}") from exc
    return (arr > 127).astype(np.float32)[None, None]


def quantize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x, np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_image(path, image: np.ndarray) -> None:
    Image.fromarray(quantize(image.reshape(3, *image.shape[-2:]).transpose(1, 2, 0)), "RGB").save(path)


def write_gray(path, values: np.ndarray) -> None:
    """8-bit grayscale from a single-channel map in [0, 1]."""
    Image.fromarray(quantize(values.reshape(values.shape[-2:])), "L").save(path)


def save_dataset(samples: Sequence[Sample], root) -> Path:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        img_rel, mask_rel = f"images/{s.id}.ppm", f"masks/{s.id}.pgm"
        write_image(root / img_rel, s.image)
        write_gray(root / mask_rel, s.mask)
        lines.append(f"{s.id}\t{img_rel}\t{mask_rel}")
    manifest = root / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def load_dataset(root) -> List[Sample]:
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.is_file():
        raise DataError(f"no manifest.txt under {root}")
    samples = []
    for n, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{manifest}:{n}: expected id<TAB>image<TAB>mask")
        sid, img, msk = parts
        image, mask = read_image(root / img), read_mask(root / msk)
        if image.shape[-2:] != mask.shape[-2:]:
            raise DataError(f"{sid}: image {image.shape[-2:]} and mask {mask.shape[-2:]} differ in size")
        samples.append(Sample(image, mask, sid))
    return samples
