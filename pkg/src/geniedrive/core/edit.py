"""Occupancy editing: remove or insert axis-aligned boxes of voxels."""

from __future__ import annotations

from dataclasses import dataclass

from .grid import OccupancyGrid


@dataclass(frozen=True)
class EditSpec:
    """REMOVE clears a bbox to free space; INSERT stamps ``class_id`` into it.

    ``bbox`` is (x0, y0, z0, x1, y1, z1) in voxel indices, half-open on the
    upper bound.
    """

    kind: str  # "REMOVE" | "INSERT"
    bbox: tuple[int, int, int, int, int, int]
    class_id: int | None = None

    @staticmethod
    def remove(bbox) -> "EditSpec":
        return EditSpec("REMOVE", tuple(bbox))

    @staticmethod
    def insert(bbox, class_id: int) -> "EditSpec":
        return EditSpec("INSERT", tuple(bbox), class_id)


def edit_grid(
    grid: OccupancyGrid, op: EditSpec, n_classes: int, free_id: int = 0
) -> OccupancyGrid:
    x0, y0, z0, x1, y1, z1 = op.bbox
    H, W, D = grid.shape
    if not (0 <= x0 <= x1 <= H and 0 <= y0 <= y1 <= W and 0 <= z0 <= z1 <= D):
        raise ValueError(f"bbox {op.bbox} out of bounds for grid {grid.shape}")

    out = grid.copy()
    if op.kind == "REMOVE":
        out.labels[x0:x1, y0:y1, z0:z1] = free_id
    elif op.kind == "INSERT":
        if op.class_id is None or not (0 <= op.class_id < n_classes):
            raise ValueError(f"class_id {op.class_id} out of range [0, {n_classes})")
        out.labels[x0:x1, y0:y1, z0:z1] = op.class_id
    else:
        raise ValueError(f"unknown edit kind {op.kind!r}")
    return out
