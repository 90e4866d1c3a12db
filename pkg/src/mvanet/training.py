"""Training loop, evaluation, and single-image inference."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import torch

from . import checkpoint as ckpt_io
from .config import RunConfig, parse_config
from .data import Sample, augment, load_dataset, read_image, write_gray
from .errors import ConfigError, DataError, GeometryError, TrainingError
from .losses import total_loss
from .metrics import MetricsReport, compute_all
from .model import MVANet

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.bin"
LOG_NAME = "train.log"


def build_model(config: RunConfig) -> MVANet:
    rows, cols = config.grid
    return MVANet(
        grid_rows=rows,
        grid_cols=cols,
        widths=config.widths,
        strides=config.strides,
        dim=config.dim,
        heads=config.heads,
        windows=config.windows,
        use_mclm=config.mclm,
        use_mcrm=config.mcrm,
        use_vrm=config.vrm,
        views=config.views,
    )


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def _batches(num_samples: int, batch_size: int, seed: int, epoch: int) -> List[List[int]]:
    order = np.random.default_rng([seed, epoch]).permutation(num_samples)
    return [order[i:i + batch_size].tolist() for i in range(0, num_samples, batch_size)]


def _derived_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def _check_sizes(samples: Sequence[Sample], config: RunConfig) -> None:
    for s in samples:
        if s.image.shape[-2:] != (config.image_size, config.image_size):
            raise DataError(f"{s.id}: image is {s.image.shape[-2:]}, config expects {config.image_size}x{config.image_size}")


@dataclass
class TrainResult:
    checkpoint: ckpt_io.Checkpoint
    losses: List[float] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None


def _format_step(step: int, components: dict) -> str:
    parts = [f"step={step}"] + [f"{k}={v:.6f}" for k, v in components.items()]
    return " ".join(parts)


def train(
    config: RunConfig,
    samples: Sequence[Sample] | None = None,
    out_dir=None,
    echo: Callable[[str], None] | None = None,
) -> TrainResult:
    """Adam on the deep-supervised loss.  Deterministic for a given config.

    ``samples`` overrides loading ``config.data``; ``out_dir`` overrides
    ``config.out`` (``None`` in both places writes nothing).
    """
    config.validate()
    if samples is None:
        if not config.data:
            raise ConfigError("paths.data is not set")
        samples = load_dataset(config.data)
    if len(samples) == 0:
        raise DataError("training set is empty")
    _check_sizes(samples, config)
    out = Path(out_dir if out_dir is not None else config.out) if (out_dir is not None or config.out) else None

    seed_everything(config.seed)
    model = build_model(config)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    streams = model.layout.streams

    steps_per_epoch = math.ceil(len(samples) / config.batch_size)
    total_steps = config.steps if config.steps > 0 else config.epochs * steps_per_epoch
    log_lines: List[str] = []
    losses: List[float] = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config.to_text())
    ckpt_path = out / CHECKPOINT_NAME if out is not None else None

    step = 0
    epoch = 0
    while step < total_steps:
        for batch in _batches(len(samples), config.batch_size, config.seed, epoch):
            if step >= total_steps:
                break
            chosen = [samples[i] for i in batch]
            if config.augment:
                chosen = [augment(s, seed=_derived_seed(config.seed, step, j)) for j, s in enumerate(chosen)]
            image = torch.from_numpy(np.concatenate([s.image for s in chosen]))
            mask = torch.from_numpy(np.concatenate([s.mask for s in chosen]))

            output = model(image)
            breakdown = total_loss(
                output.supervision, mask, config.lambda_g, config.lambda_a, streams=streams, weighted=config.weighted_iou
            )
            components = breakdown.as_floats()
            step += 1
            if not all(math.isfinite(v) for v in components.values()):
                dump = _format_step(step, components)
                if out is not None:
                    (out / "diagnostic.txt").write_text(dump + "\n" + "\n".join(log_lines[-20:]) + "\n")
                raise TrainingError(f"non-finite loss at step {step}: {dump}")
            optimizer.zero_grad(set_to_none=True)
            breakdown.total.backward()
            optimizer.step()

            losses.append(components["total"])
            line = _format_step(step, components)
            log_lines.append(line)
            if echo is not None:
                echo(line)
            if out is not None and (step % config.checkpoint_every == 0 or step == total_steps):
                ckpt_io.from_model(model, config.to_text(), step).save(ckpt_path)
                (out / LOG_NAME).write_text("\n".join(log_lines) + "\n")
        epoch += 1

    final = ckpt_io.from_model(model, config.to_text(), step)
    return TrainResult(final, losses, ckpt_path)


def load_model(checkpoint) -> tuple[MVANet, RunConfig]:
    """Rebuild the network described by a checkpoint's config snapshot."""
    ck = checkpoint if isinstance(checkpoint, ckpt_io.Checkpoint) else ckpt_io.Checkpoint.load(checkpoint)
    config = parse_config(ck.config_text)
    model = build_model(config)
    ckpt_io.load_into(model, ck)
    model.eval()
    return model, config


def _predict(model: MVANet, image: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        return model(torch.from_numpy(image)).prediction.numpy()


def evaluate(checkpoint, data, out_dir=None) -> MetricsReport:
    """Metrics of a checkpoint over a dataset root (or a list of samples)."""
    model, config = load_model(checkpoint)
    samples = load_dataset(data) if isinstance(data, (str, Path)) else list(data)
    if not samples:
        raise DataError("evaluation set is empty")
    for s in samples:
        model.make_grid(*s.image.shape[-2:])  # raises on incompatible sizes
    preds, gts = [], []
    start = time.perf_counter()
    for s in samples:
        preds.append(_predict(model, s.image))
        gts.append(s.mask)
    elapsed = time.perf_counter() - start
    report = compute_all(preds, gts)
    report.throughput = len(samples) / elapsed if elapsed > 0 else float("inf")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write_kv(out / "report.txt")
        report.write_table(out / "report.tsv")
    return report


def infer(checkpoint, image_path, out_path, echo: Callable[[str], None] | None = None) -> np.ndarray:
    """Write an 8-bit grayscale prediction; returns the float map."""
    model, _ = load_model(checkpoint)
    image = read_image(image_path)
    h, w = image.shape[-2:]
    try:
        model.make_grid(h, w)
    except GeometryError as exc:
        raise GeometryError(f"{image_path}: {exc}") from None
    start = time.perf_counter()
    pred = _predict(model, image)
    latency = time.perf_counter() - start
    write_gray(out_path, pred)
    if echo is not None:
        echo(f"latency_ms={latency * 1000:.1f} image={image_path} size={h}x{w}")
    return pred[0, 0]
