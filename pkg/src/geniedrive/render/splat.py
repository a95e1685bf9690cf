"""Occupancy splatting: depth-sorted alpha compositing of per-class weights.

Every occupied voxel becomes a cube primitive.  Per pixel the weights
w_i = alpha_i * prod_{j<i}(1 - alpha_j) accumulate per class front to
back, and the pixel takes the argmax class (ties to the lowest class id),
or the background sentinel where nothing landed.

Footprints: the default rasterizes each cube's exact projected silhouette
(union of its visible faces), which keeps the argmax labels aligned with
a first-hit ray march even for near-field voxels; ``footprint="square"``
uses the simpler center-projected square of side max(1, projected
diameter) instead.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..core.grid import LabelPalette, OccupancyGrid
from .camera import Camera

TRANSMITTANCE_CUTOFF = 1e-3

# Cube corners in {-1, +1}^3 order, and each face's corner indices wound
# consistently around the face.
_CORNERS = np.array(list(itertools.product([-1, 1], repeat=3)), dtype=np.float64)
_FACES = {
    ("x", -1): (0, 1, 3, 2),
    ("x", +1): (4, 5, 7, 6),
    ("y", -1): (0, 1, 5, 4),
    ("y", +1): (2, 3, 7, 6),
    ("z", -1): (0, 2, 6, 4),
    ("z", +1): (1, 3, 7, 5),
}
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class Primitive:
    center: np.ndarray  # (3,) meters
    class_id: int
    opacity: float
    radius: float

    def __post_init__(self):
        if not 0.0 < self.opacity <= 1.0:
            raise ValueError(f"opacity must be in (0, 1], got {self.opacity}")


@dataclass
class SemanticMap:
    """Per-camera label image; ``background_id`` marks rays that hit nothing."""

    labels: np.ndarray  # (height, width) integers
    background_id: int


def voxels_to_primitives(
    grid: OccupancyGrid, alpha_default: float = 0.95, free_id: int = 0
) -> list[Primitive]:
    """One primitive per occupied voxel, centered there, radius half a voxel."""
    idx = np.argwhere(grid.labels != free_id)
    centers = grid.origin + idx * grid.voxel_size
    classes = grid.labels[idx[:, 0], idx[:, 1], idx[:, 2]]
    r = grid.voxel_size / 2
    return [
        Primitive(center=c, class_id=int(k), opacity=alpha_default, radius=r)
        for c, k in zip(centers, classes)
    ]


def _primitive_arrays(primitives):
    centers = np.array([p.center for p in primitives], dtype=np.float64).reshape(-1, 3)
    classes = np.array([p.class_id for p in primitives], dtype=np.int64)
    alphas = np.array([p.opacity for p in primitives], dtype=np.float64)
    radii = np.array([p.radius for p in primitives], dtype=np.float64)
    return centers, classes, alphas, radii


def _quad_mask(px: np.ndarray, py: np.ndarray, qu: np.ndarray, qv: np.ndarray):
    """Pixel centers inside the convex quad (qu, qv), winding-agnostic."""
    inside_pos = np.ones_like(px, dtype=bool)
    inside_neg = np.ones_like(px, dtype=bool)
    for k in range(4):
        ax, ay = qu[k], qv[k]
        bx, by = qu[(k + 1) % 4], qv[(k + 1) % 4]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        inside_pos &= cross >= 0
        inside_neg &= cross <= 0
    return inside_pos | inside_neg


def splat(
    primitives: list[Primitive],
    camera: Camera,
    palette: LabelPalette,
    background_id: int | None = None,
    early_exit: bool = True,
    footprint: str = "silhouette",
) -> SemanticMap:
    if camera.fx <= 0 or camera.fy <= 0:
        raise ValueError("degenerate camera")
    if footprint not in ("silhouette", "square"):
        raise ValueError(f"unknown footprint model {footprint!r}")
    if background_id is None:
        background_id = palette.n_classes
    h, w = camera.height, camera.width
    empty = np.full((h, w), background_id, dtype=np.int64)
    if not primitives:
        return SemanticMap(empty, background_id)

    centers, classes, alphas, radii = _primitive_arrays(primitives)
    cam_pts = camera.world_to_cam(centers)
    front = cam_pts[:, 2] > 1e-9
    if not front.any():
        return SemanticMap(empty, background_id)
    centers, classes, alphas, radii = (
        centers[front], classes[front], alphas[front], radii[front]
    )
    z = cam_pts[front, 2]

    # Project every cube corner once; footprints come from these bounds.
    corners = centers[:, None, :] + _CORNERS[None] * radii[:, None, None]
    cc = camera.world_to_cam(corners.reshape(-1, 3)).reshape(-1, 8, 3)
    cz = np.maximum(cc[:, :, 2], 1e-6)
    cu = camera.fx * cc[:, :, 0] / cz + camera.K[0, 2]
    cv = camera.fy * cc[:, :, 1] / cz + camera.K[1, 2]

    if footprint == "square":
        u = camera.fx * cam_pts[front, 0] / z + camera.K[0, 2]
        v = camera.fy * cam_pts[front, 1] / z + camera.K[1, 2]
        f_mean = 0.5 * (camera.fx + camera.fy)
        half = np.maximum(1.0, 2.0 * radii * f_mean / z) / 2
        ulo_f, uhi_f = u - half, u + half
        vlo_f, vhi_f = v - half, v + half
    else:
        ulo_f, uhi_f = cu.min(axis=1), cu.max(axis=1)
        vlo_f, vhi_f = cv.min(axis=1), cv.max(axis=1)

    eye = camera.cam_center()

    # Total order independent of the input arrangement: depth first, then
    # geometric/semantic tie-breaks so equal-depth duplicates stay stable.
    cx, cy, cz_w = centers.T
    order = np.lexsort((alphas, classes, cz_w, cy, cx, z))

    weights = np.zeros((palette.n_classes, h, w), dtype=np.float64)
    transmittance = np.ones((h, w), dtype=np.float64)
    cutoff = TRANSMITTANCE_CUTOFF if early_exit else 0.0

    for i in order:
        ulo = max(int(np.floor(ulo_f[i] + 0.5)), 0)
        uhi = min(max(int(np.floor(uhi_f[i] + 0.5)), ulo + 1), w)
        vlo = max(int(np.floor(vlo_f[i] + 0.5)), 0)
        vhi = min(max(int(np.floor(vhi_f[i] + 0.5)), vlo + 1), h)
        if ulo >= uhi or vlo >= vhi:
            continue
        sub_t = transmittance[vlo:vhi, ulo:uhi]
        active = sub_t > cutoff
        if not active.any():
            continue
        if footprint == "silhouette" and (uhi - ulo) * (vhi - vlo) > 1:
            active = active & _silhouette_mask(
                eye, centers[i], radii[i], cu[i], cv[i], ulo, uhi, vlo, vhi
            )
            if not active.any():
                continue
        contrib = np.where(active, alphas[i] * sub_t, 0.0)
        weights[classes[i], vlo:vhi, ulo:uhi] += contrib
        sub_t[active] *= 1.0 - alphas[i]

    total = weights.sum(axis=0)
    labels = np.argmax(weights, axis=0)  # ties resolve to the lowest class id
    labels = np.where(total > 0.0, labels, background_id)
    return SemanticMap(labels.astype(np.int64), background_id)


def _silhouette_mask(
    eye, center, radius, cu_i, cv_i, ulo: int, uhi: int, vlo: int, vhi: int
) -> np.ndarray:
    """Union of the cube's visible projected faces over the bbox pixel grid."""
    px, py = np.meshgrid(
        np.arange(ulo, uhi) + 0.5, np.arange(vlo, vhi) + 0.5
    )
    mask = np.zeros(px.shape, dtype=bool)
    any_face = False
    for (axis, sign), idxs in _FACES.items():
        a = _AXIS_INDEX[axis]
        if sign * (eye[a] - center[a]) <= radius:
            continue  # face not visible from the eye point
        any_face = True
        mask |= _quad_mask(
            px, py, cu_i[list(idxs)], cv_i[list(idxs)]
        )
        if mask.all():
            break
    if not any_face:  # eye inside the cube: the footprint covers its bbox
        return np.ones(px.shape, dtype=bool)
    return mask


def render_sequence(
    frames: list[OccupancyGrid],
    rig: list[Camera],
    palette: LabelPalette,
    alpha_default: float = 0.95,
    background_id: int | None = None,
) -> list[list[SemanticMap]]:
    """Splat every (frame, camera) pair; maps[t][v] is frame t seen by camera v."""
    if not rig:
        raise ValueError("camera rig is empty")
    out = []
    for grid in frames:
        prims = voxels_to_primitives(grid, alpha_default, free_id=palette.free_id)
        out.append([splat(prims, cam, palette, background_id) for cam in rig])
    return out
