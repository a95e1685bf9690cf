"""Occupancy IoU metrics.

Conventions (documented because upstream protocols leave them implicit):
binary IoU is over occupied voxels only (label != free); the mIoU mean
skips the free class and any class absent from both grids; an empty-vs-
empty comparison scores 1.0.
"""

from __future__ import annotations

import numpy as np

from .grid import LabelPalette, OccupancyGrid


def _check_shapes(pred: OccupancyGrid, gt: OccupancyGrid) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")


def compute_iou(pred: OccupancyGrid, gt: OccupancyGrid, free_id: int = 0) -> float:
    """Binary IoU of occupied voxels; 1.0 when both grids are entirely free."""
    _check_shapes(pred, gt)
    occ_p = pred.labels != free_id
    occ_g = gt.labels != free_id
    union = np.count_nonzero(occ_p | occ_g)
    if union == 0:
        return 1.0
    inter = np.count_nonzero(occ_p & occ_g)
    return inter / union


def compute_miou(
    pred: OccupancyGrid, gt: OccupancyGrid, palette: LabelPalette
) -> tuple[np.ndarray, float]:
    """Per-class IoU and its mean.

    Returns an array of length n_classes holding each class IoU, with NaN at
    the free class and at classes absent from both grids; the mean is over
    the non-NaN entries, defined as 1.0 when every class is excluded.
    """
    _check_shapes(pred, gt)
    per_class = np.full(palette.n_classes, np.nan)
    for c in range(palette.n_classes):
        if c == palette.free_id:
            continue
        in_p = pred.labels == c
        in_g = gt.labels == c
        union = np.count_nonzero(in_p | in_g)
        if union == 0:
            continue
        per_class[c] = np.count_nonzero(in_p & in_g) / union
    valid = ~np.isnan(per_class)
    mean = float(per_class[valid].mean()) if valid.any() else 1.0
    return per_class, mean
