"""Condition-stack export: rendered semantic maps on disk.

Directory layout: ``cond_manifest`` (JSON: views, frames, image dims,
palette) plus one ``view{v}_frame{t}.bin`` per map — 8-byte magic
``SEMMAPv1``, two little-endian uint32 (h, w), then uint8 labels
row-major.  Optional PNG twins for eyeballing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..core.grid import LabelPalette
from .splat import SemanticMap

MAP_MAGIC = b"SEMMAPv1"
BACKGROUND_COLOR = (70, 130, 220)


class ConditionStackError(Exception):
    pass


def save_condition_stack(
    maps: list[list[SemanticMap]],
    palette: LabelPalette,
    path,
    write_png: bool = False,
) -> None:
    """``maps[t][v]`` is frame t seen by view v."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    n_frames = len(maps)
    n_views = len(maps[0]) if n_frames else 0
    h, w = maps[0][0].labels.shape if n_frames else (0, 0)
    background_id = maps[0][0].background_id if n_frames else palette.n_classes

    manifest = {
        "version": 1,
        "views": n_views,
        "frames": n_frames,
        "height": h,
        "width": w,
        "palette": {
            "n_classes": palette.n_classes,
            "free_id": palette.free_id,
            "names": list(palette.names),
            "colors": [list(c) for c in palette.colors],
            "background_id": background_id,
        },
    }
    (path / "cond_manifest").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    for t, per_view in enumerate(maps):
        for v, m in enumerate(per_view):
            with open(path / f"view{v}_frame{t}.bin", "wb") as f:
                f.write(MAP_MAGIC)
                f.write(struct.pack("<II", *m.labels.shape))
                f.write(m.labels.astype(np.uint8).tobytes())
            if write_png:
                _write_png(m, palette, path / f"view{v}_frame{t}.png")


def _write_png(m: SemanticMap, palette: LabelPalette, out_path: Path) -> None:
    from PIL import Image

    lut = np.array(list(palette.colors) + [BACKGROUND_COLOR], dtype=np.uint8)
    clipped = np.minimum(m.labels, len(lut) - 1)
    Image.fromarray(lut[clipped]).save(out_path)


def colorize(labels: np.ndarray, palette: LabelPalette) -> np.ndarray:
    """Labels (possibly with the background sentinel) to an RGB uint8 image."""
    lut = np.array(list(palette.colors) + [BACKGROUND_COLOR], dtype=np.uint8)
    return lut[np.minimum(labels, len(lut) - 1)]


def load_condition_stack(path) -> tuple[np.ndarray, dict]:
    """Returns (labels array of shape (views, frames, h, w), manifest dict)."""
    path = Path(path)
    manifest_path = path / "cond_manifest"
    if not manifest_path.is_file():
        raise ConditionStackError(f"no cond_manifest in {path}")
    manifest = json.loads(manifest_path.read_text())
    n_views, n_frames = manifest["views"], manifest["frames"]
    h, w = manifest["height"], manifest["width"]

    out = np.zeros((n_views, n_frames, h, w), dtype=np.int64)
    for v in range(n_views):
        for t in range(n_frames):
            blob = (path / f"view{v}_frame{t}.bin").read_bytes()
            if blob[:8] != MAP_MAGIC:
                raise ConditionStackError(f"bad magic in view{v}_frame{t}.bin")
            mh, mw = struct.unpack_from("<II", blob, 8)
            if (mh, mw) != (h, w):
                raise ConditionStackError(
                    f"map dims {(mh, mw)} != manifest {(h, w)} in view{v}_frame{t}.bin"
                )
            out[v, t] = np.frombuffer(
                blob, dtype=np.uint8, count=h * w, offset=16
            ).reshape(h, w)
    return out, manifest
