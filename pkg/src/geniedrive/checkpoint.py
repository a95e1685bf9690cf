"""Repo-wide checkpoint format.

A checkpoint is a directory with ``manifest`` (JSON: a ``tensors`` table
mapping tensor name -> {dtype, shape, byte_offset, byte_length}, plus a
free-form ``meta`` dict for model hyperparameters) and ``weights.bin``
(little-endian float32, tensors packed back to back).  Loading validates
the total blob length against the manifest.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch


class CheckpointError(Exception):
    pass


def save_checkpoint(path, state_dict: dict, meta: dict | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    tensors = {}
    blobs = []
    offset = 0
    for name in sorted(state_dict):
        arr = state_dict[name].detach().cpu().to(torch.float32).numpy()
        raw = np.ascontiguousarray(arr).astype("<f4").tobytes()
        tensors[name] = {
            "dtype": "float32",
            "shape": list(arr.shape),
            "byte_offset": offset,
            "byte_length": len(raw),
        }
        blobs.append(raw)
        offset += len(raw)

    manifest = {"version": 1, "meta": meta or {}, "tensors": tensors}
    (path / "manifest").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (path / "weights.bin").write_bytes(b"".join(blobs))


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (state_dict of float32 tensors, meta)."""
    path = Path(path)
    manifest_path = path / "manifest"
    if not manifest_path.is_file():
        raise CheckpointError(f"no manifest in {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"manifest is not valid JSON: {e}") from e

    blob = (path / "weights.bin").read_bytes()
    tensors = manifest["tensors"]
    expected = sum(t["byte_length"] for t in tensors.values())
    if expected != len(blob):
        raise CheckpointError(
            f"weights.bin holds {len(blob)} bytes, manifest expects {expected}"
        )

    state = {}
    for name, info in tensors.items():
        if info["dtype"] != "float32":
            raise CheckpointError(f"unsupported dtype {info['dtype']} for {name}")
        count = int(np.prod(info["shape"])) if info["shape"] else 1
        arr = np.frombuffer(
            blob, dtype="<f4", count=count, offset=info["byte_offset"]
        ).reshape(info["shape"])
        state[name] = torch.from_numpy(arr.copy())
    return state, manifest.get("meta", {})
