"""First-hit ray marching through the voxel grid.

Independent cross-check for the splatter: steps each pixel ray in uniform
increments of a quarter voxel and reports the class of the first occupied
voxel, ignoring opacity entirely.
"""

from __future__ import annotations

import numpy as np

from ..core.grid import LabelPalette, OccupancyGrid
from .camera import Camera


MAX_STEP_FRACTION = 0.25  # steps must stay at or below a quarter voxel


def raymarch_oracle(
    grid: OccupancyGrid,
    camera: Camera,
    palette: LabelPalette,
    background_id: int | None = None,
    step_fraction: float = 0.125,
) -> "SemanticMap":
    from .splat import SemanticMap

    if camera.fx <= 0 or camera.fy <= 0:
        raise ValueError("degenerate camera")
    if not 0 < step_fraction <= MAX_STEP_FRACTION:
        raise ValueError(
            f"step fraction must lie in (0, {MAX_STEP_FRACTION}], got {step_fraction}"
        )
    if background_id is None:
        background_id = palette.n_classes

    h, w = camera.height, camera.width
    vs = grid.voxel_size
    dims = np.array(grid.shape)
    lo = grid.origin - vs / 2  # voxel (0,0,0) spans [origin - vs/2, origin + vs/2)
    hi = lo + dims * vs

    # One ray through each pixel center.
    uu, vv = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    pix = np.stack([uu.ravel(), vv.ravel(), np.ones(h * w)])
    dirs_cam = np.linalg.inv(camera.K) @ pix
    R = camera.extrinsic[:3, :3]
    dirs = (R.T @ dirs_cam).T
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = camera.cam_center()

    # Slab intersection with the grid AABB.
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_a = (lo[None, :] - origin[None, :]) * inv
        t_b = (hi[None, :] - origin[None, :]) * inv
    t_near = np.nanmax(np.minimum(t_a, t_b), axis=1)
    t_far = np.nanmin(np.maximum(t_a, t_b), axis=1)
    t_near = np.maximum(t_near, 0.0)

    labels_flat = np.full(h * w, background_id, dtype=np.int64)
    step = vs * step_fraction
    t_cur = t_near.copy()
    active = t_far > t_near
    while active.any():
        ai = np.nonzero(active)[0]
        pts = origin[None, :] + dirs[ai] * (t_cur[ai, None] + step / 2)
        idx = np.floor((pts - lo[None, :]) / vs).astype(np.int64)
        inb = np.all((idx >= 0) & (idx < dims[None, :]), axis=1)
        hit = np.zeros(len(ai), dtype=bool)
        if inb.any():
            lab = grid.labels[idx[inb, 0], idx[inb, 1], idx[inb, 2]]
            occupied = lab != palette.free_id
            hit_idx = ai[inb][occupied]
            labels_flat[hit_idx] = lab[occupied]
            hit[np.nonzero(inb)[0][occupied]] = True
        t_cur[ai] += step
        active[ai] = ~hit & (t_cur[ai] <= t_far[ai])

    return SemanticMap(labels_flat.reshape(h, w), background_id)
