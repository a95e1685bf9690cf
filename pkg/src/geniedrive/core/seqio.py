"""Sequence directory format.

A saved sequence is a directory holding

- ``manifest`` — UTF-8 JSON with keys {version, H, W, D, n_classes, free_id,
  fps, frame_count, voxel_size, ego_poses, controls, cameras};
- ``frames.bin`` — concatenated per-frame blocks, each an 8-byte magic
  ``OCCGRIDv``, three little-endian uint32 (H, W, D), then H*W*D uint8
  labels in row-major (x-major, then y, then z) order.

Grids follow the centered-origin convention (ego at the xy center, floor at
z=0); saving a grid with any other origin is rejected so round trips stay
lossless.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import (
    Command,
    ControlSignal,
    LabelPalette,
    OccupancyGrid,
    RigidTransform2D,
    SceneSequence,
)
from ..render.camera import Camera

MAGIC = b"OCCGRIDv"
VERSION = 1


class SequenceFormatError(Exception):
    """Base class for sequence (de)serialization failures."""


class ManifestError(SequenceFormatError):
    """Missing, unparsable or inconsistent manifest."""


class HeaderError(SequenceFormatError):
    """Bad magic bytes in a frame block."""


class DimensionMismatchError(SequenceFormatError):
    """Frame dims or frame count disagree with the manifest."""


class TruncatedBlobError(SequenceFormatError):
    """frames.bin ends before the manifest says it should."""


def _transform_to_list(t: RigidTransform2D) -> list[float]:
    return [t.theta, t.tx, t.ty]


def _transform_from_list(v) -> RigidTransform2D:
    return RigidTransform2D(float(v[0]), float(v[1]), float(v[2]))


def save_sequence(seq: SceneSequence, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    H, W, D = seq.frames[0].shape
    vs = seq.frames[0].voxel_size
    expected_origin = OccupancyGrid.centered_origin((H, W, D), vs)
    for t, frame in enumerate(seq.frames):
        if frame.shape != (H, W, D):
            raise DimensionMismatchError(f"frame {t} shape {frame.shape} != {(H, W, D)}")
        if not np.allclose(frame.origin, expected_origin):
            raise ManifestError(
                f"frame {t} origin {frame.origin} is not the centered convention"
            )
        frame.validate_labels(seq.palette.n_classes)

    manifest = {
        "version": VERSION,
        "H": H,
        "W": W,
        "D": D,
        "n_classes": seq.palette.n_classes,
        "free_id": seq.palette.free_id,
        "fps": seq.fps,
        "frame_count": len(seq.frames),
        "voxel_size": vs,
        "ego_poses": [_transform_to_list(p) for p in seq.ego_poses],
        "controls": [
            {
                "command": c.command.value,
                "waypoints": c.waypoints.tolist(),
                "gt_transform": _transform_to_list(c.gt_transform),
            }
            for c in seq.controls
        ],
        "cameras": [
            {
                "K": cam.K.reshape(-1).tolist(),
                "extrinsic": cam.extrinsic.reshape(-1).tolist(),
                "width": cam.width,
                "height": cam.height,
            }
            for cam in seq.camera_rig
        ],
    }
    (path / "manifest").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    with open(path / "frames.bin", "wb") as f:
        for frame in seq.frames:
            f.write(MAGIC)
            f.write(struct.pack("<III", H, W, D))
            f.write(np.ascontiguousarray(frame.labels, dtype=np.uint8).tobytes())


def load_sequence(path) -> SceneSequence:
    path = Path(path)
    manifest_path = path / "manifest"
    if not manifest_path.is_file():
        raise ManifestError(f"no manifest in {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest is not valid JSON: {e}") from e

    required = {
        "version", "H", "W", "D", "n_classes", "free_id", "fps",
        "frame_count", "voxel_size", "ego_poses", "controls", "cameras",
    }
    missing = required - manifest.keys()
    if missing:
        raise ManifestError(f"manifest missing keys: {sorted(missing)}")

    H, W, D = int(manifest["H"]), int(manifest["W"]), int(manifest["D"])
    frame_count = int(manifest["frame_count"])
    vs = float(manifest["voxel_size"])
    origin = OccupancyGrid.centered_origin((H, W, D), vs)
    block = len(MAGIC) + 12 + H * W * D

    blob_path = path / "frames.bin"
    if not blob_path.is_file():
        raise TruncatedBlobError(f"no frames.bin in {path}")
    blob = blob_path.read_bytes()

    frames = []
    off = 0
    for t in range(frame_count):
        if off + block > len(blob):
            raise TruncatedBlobError(
                f"frames.bin holds {len(blob)} bytes, frame {t} needs through "
                f"byte {off + block}"
            )
        if blob[off : off + 8] != MAGIC:
            raise HeaderError(f"bad magic in frame {t}: {blob[off:off + 8]!r}")
        fh, fw, fd = struct.unpack_from("<III", blob, off + 8)
        if (fh, fw, fd) != (H, W, D):
            raise DimensionMismatchError(
                f"frame {t} header dims {(fh, fw, fd)} != manifest {(H, W, D)}"
            )
        labels = np.frombuffer(
            blob, dtype=np.uint8, count=H * W * D, offset=off + 20
        ).reshape(H, W, D)
        frames.append(OccupancyGrid(labels.copy(), vs, origin))
        off += block
    if off != len(blob):
        raise DimensionMismatchError(
            f"frames.bin has {len(blob) - off} trailing bytes beyond "
            f"{frame_count} frames"
        )

    controls = [
        ControlSignal(
            command=Command(c["command"]),
            waypoints=np.array(c["waypoints"], dtype=np.float64),
            gt_transform=_transform_from_list(c["gt_transform"]),
        )
        for c in manifest["controls"]
    ]
    ego_poses = [_transform_from_list(p) for p in manifest["ego_poses"]]
    cameras = [
        Camera(
            K=np.array(c["K"], dtype=np.float64).reshape(3, 3),
            extrinsic=np.array(c["extrinsic"], dtype=np.float64).reshape(4, 4),
            width=int(c["width"]),
            height=int(c["height"]),
        )
        for c in manifest["cameras"]
    ]
    palette = LabelPalette.default(int(manifest["n_classes"]), int(manifest["free_id"]))
    try:
        return SceneSequence(
            frames=frames,
            controls=controls,
            ego_poses=ego_poses,
            camera_rig=cameras,
            fps=float(manifest["fps"]),
            palette=palette,
        )
    except ValueError as e:
        raise ManifestError(f"inconsistent sequence in {path}: {e}") from e
