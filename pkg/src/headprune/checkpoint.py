"""Checkpoint format: a human-auditable JSON header plus a raw f32 blob.

`model.json` holds the model config, the language-tag list, the training
step counter and a parameter manifest (name, shape, byte offset/size);
`model.bin` is the concatenation of all parameter arrays as little-endian
float32 in manifest order. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .model import ModelConfig, param_shapes

HEADER_NAME = "model.json"
BLOB_NAME = "model.bin"
_DTYPE = "<f4"


@dataclass
class Checkpoint:
    config: ModelConfig
    langs: tuple[str, ...]
    step: int
    params: dict[str, np.ndarray]

    def __post_init__(self):
        expected = param_shapes(self.config)
        if set(self.params) != set(expected):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ValueError(f"parameter names mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if tuple(self.params[name].shape) != shape:
                raise ValueError(
                    f"parameter {name}: shape {self.params[name].shape} != expected {shape}"
                )


def checkpoint_files(ckpt: Checkpoint) -> dict[str, bytes]:
    """Serialized checkpoint as {file name: bytes}, ready to write."""
    manifest = []
    chunks = []
    offset = 0
    for name in sorted(ckpt.params):
        arr = ckpt.params[name]
        if arr.dtype != np.float32:
            raise ValueError(f"parameter {name} must be float32 for serialization, got {arr.dtype}")
        raw = np.ascontiguousarray(arr).astype(_DTYPE, copy=False).tobytes()
        manifest.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "size": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    header = {
        "config": asdict(ckpt.config),
        "langs": list(ckpt.langs),
        "step": ckpt.step,
        "dtype": _DTYPE,
        "params": manifest,
    }
    return {
        HEADER_NAME: (json.dumps(header, indent=2, sort_keys=True) + "\n").encode("utf-8"),
        BLOB_NAME: b"".join(chunks),
    }


def save_checkpoint(ckpt: Checkpoint, directory: Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, data in checkpoint_files(ckpt).items():
        path = directory / name
        path.write_bytes(data)
        written.append(path)
    return written


def load_config(directory: Path) -> tuple[ModelConfig, tuple[str, ...]]:
    """Read the model config and language list without touching the blob."""
    header = json.loads((Path(directory) / HEADER_NAME).read_text())
    return ModelConfig(**header["config"]), tuple(header["langs"])


def load_checkpoint(directory: Path) -> Checkpoint:
    directory = Path(directory)
    header = json.loads((directory / HEADER_NAME).read_text())
    blob = (directory / BLOB_NAME).read_bytes()
    config = ModelConfig(**header["config"])
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        start, size = entry["offset"], entry["size"]
        arr = np.frombuffer(blob[start : start + size], dtype=header["dtype"])
        params[entry["name"]] = np.ascontiguousarray(arr.reshape(entry["shape"]))
    return Checkpoint(config, tuple(header["langs"]), header["step"], params)
