"""Video tensor persistence: raw float32 blob plus per-frame PNG grids."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch


def save_video_tensor(path, video: torch.Tensor) -> None:
    """video (n, t, c, h, w) -> directory with manifest + data.bin."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arr = video.detach().cpu().numpy().astype("<f4")
    manifest = {"version": 1, "dtype": "float32", "shape": list(arr.shape)}
    (path / "manifest").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (path / "data.bin").write_bytes(np.ascontiguousarray(arr).tobytes())


def load_video_tensor(path) -> torch.Tensor:
    path = Path(path)
    manifest = json.loads((path / "manifest").read_text())
    blob = (path / "data.bin").read_bytes()
    count = int(np.prod(manifest["shape"]))
    arr = np.frombuffer(blob, dtype="<f4", count=count).reshape(manifest["shape"])
    return torch.from_numpy(arr.copy())


def save_video_frames_png(path, video: torch.Tensor) -> list[Path]:
    """Write one PNG per frame with the views side by side.

    video: (n, t, c, h, w) in [-1, 1].
    """
    from PIL import Image

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arr = video.detach().cpu().numpy()
    arr = np.clip((arr + 1.0) * 127.5, 0, 255).astype(np.uint8)
    n, t, c, h, w = arr.shape
    written = []
    for frame in range(t):
        row = np.concatenate([arr[v, frame] for v in range(n)], axis=-1)  # (c, h, n*w)
        img = np.moveaxis(row, 0, -1)
        if img.shape[-1] == 1:
            img = img[..., 0]
        out = path / f"frame_{frame:03d}.png"
        Image.fromarray(img).save(out)
        written.append(out)
    return written
