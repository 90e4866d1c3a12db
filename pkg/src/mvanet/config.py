"""Run configuration in plain ``section.key = value`` text.

``[section]`` headers are also accepted; keys that follow a header may omit
the prefix.  Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

from .errors import ConfigError

CONFIG_ENV = "MVANET_CONFIG"
SUPPORTED_GRIDS = ((2, 2), (3, 3), (4, 4))

# config key -> dataclass field
_KEYS = {
    "model.image_size": "image_size",
    "model.grid": "grid",
    "model.widths": "widths",
    "model.strides": "strides",
    "model.dim": "dim",
    "model.heads": "heads",
    "model.windows": "windows",
    "model.views": "views",
    "model.mclm": "mclm",
    "model.mcrm": "mcrm",
    "model.vrm": "vrm",
    "loss.lambda_g": "lambda_g",
    "loss.lambda_a": "lambda_a",
    "loss.weighted_iou": "weighted_iou",
    "train.lr": "lr",
    "train.beta1": "beta1",
    "train.beta2": "beta2",
    "train.epochs": "epochs",
    "train.steps": "steps",
    "train.batch_size": "batch_size",
    "train.augment": "augment",
    "train.checkpoint_every": "checkpoint_every",
    "train.seed": "seed",
    "paths.data": "data",
    "paths.out": "out",
}


@dataclass
class RunConfig:
    image_size: int = 256
    grid: Tuple[int, int] = (2, 2)
    widths: Tuple[int, ...] = (16, 32, 64, 128, 128)
    strides: Tuple[int, ...] = (4, 8, 16, 32, 32)
    dim: int = 32
    heads: int = 4
    windows: Tuple[int, ...] = (4, 8, 16)
    views: str = "multi"
    mclm: bool = True
    mcrm: bool = True
    vrm: bool = True
    lambda_g: float = 0.3
    lambda_a: float = 0.3
    weighted_iou: bool = True
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 80
    steps: int = 0  # > 0 overrides epochs with an exact step count
    batch_size: int = 1
    augment: bool = True
    checkpoint_every: int = 100
    seed: int = 0
    data: str = ""
    out: str = "runs/default"

    def validate(self) -> "RunConfig":
        rows, cols = self.grid
        if (rows, cols) not in SUPPORTED_GRIDS:
            raise ConfigError(f"model.grid must be one of 2x2, 3x3, 4x4, got {rows}x{cols}")
        if self.image_size <= 0 or self.image_size % (64 * rows) != 0:
            raise ConfigError(f"model.image_size {self.image_size} must be divisible by {64 * rows} for a {rows}x{cols} grid")
        if self.dim % 4 or self.dim % self.heads:
            raise ConfigError(f"model.dim {self.dim} must be divisible by 4 and by model.heads {self.heads}")
        if len(self.widths) != 5 or len(self.strides) != 5:
            raise ConfigError("model.widths and model.strides need five entries each")
        if not self.windows or min(self.windows) < 1:
            raise ConfigError("model.windows needs positive entries")
        if self.views not in ("multi", "distant", "closeup", "original"):
            raise ConfigError(f"model.views {self.views!r} is not one of multi, distant, closeup, original")
        if self.lr < 0:
            raise ConfigError("train.lr must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("train.beta1 and train.beta2 must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.steps < 0 or self.checkpoint_every < 1:
            raise ConfigError("train.batch_size and train.checkpoint_every must be >= 1; epochs and steps >= 0")
        return self

    def to_text(self) -> str:
        lines = []
        for key, name in _KEYS.items():
            lines.append(f"{key}={_format(name, getattr(self, name))}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _format(name: str, value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if name == "grid":
        return "x".join(map(str, value))
    if isinstance(value, tuple):
        return ",".join(map(str, value))
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(key: str, name: str, raw: str, default):
    raw = raw.strip()
    try:
        if name == "grid":
            parts = raw.lower().split("x")
            if len(parts) != 2:
                raise ValueError(raw)
            return int(parts[0]), int(parts[1])
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    defaults = RunConfig()
    values = {}
    section = ""
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if "." not in key and section:
            key = f"{section}.{key}"
        if key not in _KEYS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        name = _KEYS[key]
        values[name] = _parse_value(key, name, raw, getattr(defaults, name))
    return RunConfig(**values).validate()


def load_config(path=None) -> RunConfig:
    """Read ``path``, else the file named by $MVANET_CONFIG, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig().validate()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())
