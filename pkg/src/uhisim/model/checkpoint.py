"""Checkpoint files: JSON manifest + little-endian float32 tensor sidecar."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .vit import ModelParams, NormStats, TinyViTConfig


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Write <path>.json manifest and <path>.bin tensor blob atomically."""
    path = Path(path)
    entries = []
    blob = bytearray()
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f4")
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": len(blob),
            "nbytes": arr.nbytes,
        })
        blob += arr.tobytes()
    manifest = {
        "format": "uhisim-checkpoint-v1",
        "config": params.config.to_json(),
        "norm_stats": params.norm.to_json(),
        "seed": params.seed,
        "epoch": params.epoch,
        "tensors": entries,
    }
    _atomic_write(path.with_suffix(".bin"), bytes(blob))
    _atomic_write(path.with_suffix(".json"),
                  json.dumps(manifest, indent=2).encode("utf-8"))


def load_checkpoint(path: str | Path) -> ModelParams:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format") != "uhisim-checkpoint-v1":
        raise ValueError(f"not a checkpoint manifest: {path}")
    blob = path.with_suffix(".bin").read_bytes()
    tensors = {}
    for entry in manifest["tensors"]:
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(np.float64)
    return ModelParams(
        TinyViTConfig.from_json(manifest["config"]),
        tensors,
        NormStats.from_json(manifest["norm_stats"]),
        seed=manifest["seed"],
        epoch=manifest["epoch"],
    )


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
