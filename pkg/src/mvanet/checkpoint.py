"""Portable little-endian checkpoint format.

    magic      8 bytes  b"MVANETCK"
    version    uint32
    step       uint64
    config     uint32 length + UTF-8 text (RunConfig.to_text)
    arrays     uint32 count, then per array:
                 uint32 name length, UTF-8 name,
                 uint32 rank, rank x uint32 dims,
                 float32 values, row-major
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np
import torch
from torch import nn

from .errors import CheckpointError

MAGIC = b"MVANETCK"
VERSION = 1


@dataclass
class Checkpoint:
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    config_text: str = ""
    step: int = 0
    version: int = VERSION

    def to_bytes(self) -> bytes:
        cfg = self.config_text.encode("utf-8")
        parts = [MAGIC, struct.pack("<IQI", self.version, self.step, len(cfg)), cfg, struct.pack("<I", len(self.arrays))]
        for name, arr in self.arrays.items():
            key = name.encode("utf-8")
            arr = np.asarray(arr, dtype="<f4", order="C")  # ascontiguousarray would promote 0-d to 1-d
            parts.append(struct.pack("<I", len(key)) + key)
            parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
            parts.append(arr.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        if blob[:8] != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        try:
            version, step, cfg_len = struct.unpack_from("<IQI", blob, 8)
            if version != VERSION:
                raise CheckpointError(f"unsupported checkpoint version {version}")
            pos = 8 + 16
            if pos + cfg_len > len(blob):
                raise CheckpointError("truncated checkpoint: config text")
            config_text = blob[pos:pos + cfg_len].decode("utf-8")
            pos += cfg_len
            (count,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            arrays = {}
            for _ in range(count):
                (n,) = struct.unpack_from("<I", blob, pos)
                pos += 4
                name = blob[pos:pos + n].decode("utf-8")
                pos += n
                (rank,) = struct.unpack_from("<I", blob, pos)
                pos += 4
                dims = struct.unpack_from(f"<{rank}I", blob, pos)
                pos += 4 * rank
                size = int(np.prod(dims, dtype=np.int64))
                if pos + 4 * size > len(blob):
                    raise CheckpointError(f"truncated checkpoint: array {name!r} needs {4 * size} bytes")
                arrays[name] = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
                pos += 4 * size
        except struct.error as exc:
            raise CheckpointError(f"truncated checkpoint: {exc}") from exc
        if pos != len(blob):
            raise CheckpointError(f"{len(blob) - pos} trailing bytes after checkpoint payload")
        return cls(arrays, config_text, step, version)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        p = Path(path)
        if not p.is_file():
            raise CheckpointError(f"checkpoint not found: {p}")
        return cls.from_bytes(p.read_bytes())


def from_model(model: nn.Module, config_text: str = "", step: int = 0) -> Checkpoint:
    arrays = {k: v.detach().cpu().float().numpy() for k, v in model.state_dict().items()}
    return Checkpoint(arrays, config_text, step)


def load_into(model: nn.Module, ckpt: Checkpoint) -> None:
    target = model.state_dict()
    missing = sorted(set(target) - set(ckpt.arrays))
    extra = sorted(set(ckpt.arrays) - set(target))
    if missing or extra:
        raise CheckpointError(f"checkpoint does not match model: missing {missing[:5]}, unexpected {extra[:5]}")
    state = {}
    for name, ref in target.items():
        arr = ckpt.arrays[name]
        if tuple(arr.shape) != tuple(ref.shape):
            raise CheckpointError(f"{name}: checkpoint shape {arr.shape} vs model {tuple(ref.shape)}")
        state[name] = torch.from_numpy(arr).to(ref.dtype)
    model.load_state_dict(state)
