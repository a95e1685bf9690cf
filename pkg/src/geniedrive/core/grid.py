"""Occupancy grids, planar rigid transforms and driving-control records.

Conventions used throughout the project:

- A grid of shape (H, W, D) indexes (x, y, z); x/y span the ground plane,
  z is up.  ``origin`` is the metric coordinate of the *center* of voxel
  (0, 0, 0), so voxel (i, j, k) is centered at ``origin + (i, j, k) *
  voxel_size``.
- Ego motion lives in SE(2): rotation about z plus translation in the
  ground plane.  z-motion is fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Command(Enum):
    GO_STRAIGHT = "GO_STRAIGHT"
    TURN_LEFT = "TURN_LEFT"
    TURN_RIGHT = "TURN_RIGHT"
    STOP = "STOP"


@dataclass(frozen=True)
class RigidTransform2D:
    """Planar rigid motion: rotation by ``theta`` then translation (tx, ty)."""

    theta: float
    tx: float
    ty: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.theta, self.tx, self.ty)):
            raise ValueError(f"non-finite transform: {self}")

    def as_matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array(
            [[c, -s, self.tx], [s, c, self.ty], [0.0, 0.0, 1.0]], dtype=np.float64
        )

    @staticmethod
    def from_matrix(m: np.ndarray) -> "RigidTransform2D":
        theta = math.atan2(m[1, 0], m[0, 0])
        return RigidTransform2D(theta=theta, tx=float(m[0, 2]), ty=float(m[1, 2]))

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """self ∘ other: apply ``other`` first, then ``self``."""
        return RigidTransform2D.from_matrix(self.as_matrix() @ other.as_matrix())

    def inverse(self) -> "RigidTransform2D":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return RigidTransform2D(
            theta=-self.theta,
            tx=-(c * self.tx + s * self.ty),
            ty=-(-s * self.tx + c * self.ty),
        )

    def apply(self, xy: np.ndarray) -> np.ndarray:
        """Apply to points of shape (..., 2)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        x, y = xy[..., 0], xy[..., 1]
        return np.stack([c * x - s * y + self.tx, s * x + c * y + self.ty], axis=-1)

    @staticmethod
    def identity() -> "RigidTransform2D":
        return RigidTransform2D(0.0, 0.0, 0.0)

    def almost_equal(self, other: "RigidTransform2D", tol: float = 1e-6) -> bool:
        return bool(np.max(np.abs(self.as_matrix() - other.as_matrix())) <= tol)


@dataclass(frozen=True)
class LabelPalette:
    n_classes: int
    free_id: int
    names: tuple[str, ...]
    colors: tuple[tuple[int, int, int], ...]

    _BASE_NAMES = ("free", "road", "vehicle", "obstacle", "building", "barrier")
    _BASE_COLORS = (
        (0, 0, 0),
        (128, 128, 128),
        (0, 90, 200),
        (220, 60, 40),
        (170, 120, 60),
        (240, 180, 20),
    )

    def __post_init__(self):
        if not 0 <= self.free_id < self.n_classes:
            raise ValueError(f"free_id {self.free_id} out of range for {self.n_classes} classes")
        if len(self.names) != self.n_classes or len(self.colors) != self.n_classes:
            raise ValueError("names/colors length must equal n_classes")
        if len(set(self.names)) != self.n_classes:
            raise ValueError("class names must be unique")

    @staticmethod
    def default(n_classes: int, free_id: int = 0) -> "LabelPalette":
        names = []
        colors = []
        for i in range(n_classes):
            if i < len(LabelPalette._BASE_NAMES):
                names.append(LabelPalette._BASE_NAMES[i])
                colors.append(LabelPalette._BASE_COLORS[i])
            else:
                names.append(f"class{i}")
                colors.append(((37 * i) % 256, (97 * i) % 256, (17 * i + 128) % 256))
        return LabelPalette(n_classes, free_id, tuple(names), tuple(colors))


@dataclass
class OccupancyGrid:
    """Semantic voxel labels over a metric volume.

    labels: integer array (H, W, D); voxel_size: meters per voxel;
    origin: metric coordinate of the center of voxel (0, 0, 0).
    """

    labels: np.ndarray
    voxel_size: float
    origin: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 3:
            raise ValueError(f"labels must be (H, W, D), got shape {self.labels.shape}")
        if any(s <= 0 for s in self.labels.shape):
            raise ValueError(f"grid dims must be positive, got {self.labels.shape}")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError(f"labels must be integer, got {self.labels.dtype}")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.labels.shape)  # type: ignore[return-value]

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.labels.copy(), self.voxel_size, self.origin.copy())

    def occupied_mask(self, free_id: int) -> np.ndarray:
        return self.labels != free_id

    def validate_labels(self, n_classes: int) -> None:
        if self.labels.min() < 0 or self.labels.max() >= n_classes:
            raise ValueError(
                f"labels outside [0, {n_classes}): "
                f"min={self.labels.min()}, max={self.labels.max()}"
            )

    @staticmethod
    def centered_origin(shape: tuple[int, int, int], voxel_size: float) -> np.ndarray:
        """Origin placing the grid's xy-center at metric (0, 0) and z=0 at the floor."""
        H, W, _ = shape
        return np.array(
            [-(H - 1) / 2.0 * voxel_size, -(W - 1) / 2.0 * voxel_size, 0.0]
        )


@dataclass
class ControlSignal:
    """One per-step driving command with a short trajectory preview.

    ``waypoints`` are (x, y) meters in the current ego frame; ``gt_transform``
    is the ego motion to the next frame (pose of ego t+1 in the frame of ego t).
    """

    command: Command
    waypoints: np.ndarray
    gt_transform: RigidTransform2D

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64)
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 2:
            raise ValueError(f"waypoints must be (n, 2), got {self.waypoints.shape}")
        if len(self.waypoints) < 1:
            raise ValueError("need at least one waypoint")
        if not np.all(np.isfinite(self.waypoints)):
            raise ValueError("non-finite waypoints")


@dataclass
class SceneSequence:
    """A short driving clip: per-frame ego-frame grids plus controls and poses."""

    frames: list[OccupancyGrid]
    controls: list[ControlSignal]
    ego_poses: list[RigidTransform2D]
    camera_rig: list  # list[Camera]; kept untyped here to avoid a render dependency
    fps: float
    palette: LabelPalette

    def __post_init__(self):
        self.validate()

    def validate(self, tol: float = 1e-6) -> None:
        if len(self.controls) != len(self.frames) - 1:
            raise ValueError(
                f"need len(controls) == len(frames) - 1, got "
                f"{len(self.controls)} vs {len(self.frames)}"
            )
        if len(self.ego_poses) != len(self.frames):
            raise ValueError("need one ego pose per frame")
        for t, ctrl in enumerate(self.controls):
            step = self.ego_poses[t].inverse().compose(self.ego_poses[t + 1])
            if not step.almost_equal(ctrl.gt_transform, tol):
                raise ValueError(f"pose/control mismatch at frame {t}")

    def __len__(self) -> int:
        return len(self.frames)


def transform_grid(
    grid: OccupancyGrid, T: RigidTransform2D, free_id: int = 0
) -> OccupancyGrid:
    """Resample ``grid`` into the frame reached after ego motion ``T``.

    Each output voxel center is mapped through ``T`` back into the input
    frame and the nearest label is taken (labels are categorical, so
    nearest-neighbor only); pre-images outside the grid become ``free_id``.
    """
    H, W, D = grid.shape
    vs = grid.voxel_size
    ox, oy = grid.origin[0], grid.origin[1]

    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    pts = np.stack([ox + ii * vs, oy + jj * vs], axis=-1).reshape(-1, 2)
    src = T.apply(pts)
    si = np.round((src[:, 0] - ox) / vs).astype(np.int64).reshape(H, W)
    sj = np.round((src[:, 1] - oy) / vs).astype(np.int64).reshape(H, W)

    inside = (si >= 0) & (si < H) & (sj >= 0) & (sj < W)
    out = np.full_like(grid.labels, free_id)
    out[inside] = grid.labels[si[inside], sj[inside], :]
    return OccupancyGrid(out, vs, grid.origin.copy())
