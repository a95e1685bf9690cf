"""Synthetic driving scenes: a static world plus constant-velocity boxes,
voxelized into each ego frame.

The world is built in a fixed world frame (road slab at z=0, scattered
static obstacles, moving vehicle boxes); the ego drives through it with
per-step speed and turn-rate draws.  Every frame is the world voxelized
in that frame's ego coordinates, so consecutive frames are exactly
related by the ground-truth ego motion up to voxelization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    Command,
    ControlSignal,
    LabelPalette,
    OccupancyGrid,
    RigidTransform2D,
    SceneSequence,
)

ROAD, VEHICLE, OBSTACLE, BUILDING, BARRIER = 1, 2, 3, 4, 5

TURN_THRESHOLD = 0.02  # rad/frame below which a step counts as straight
STOP_SPEED = 1e-3      # m/frame below which a step counts as stopped


@dataclass
class Box:
    """Axis-aligned (in world frame) box with a constant planar velocity."""

    center: np.ndarray      # (3,) meters at t=0
    half_size: np.ndarray   # (3,) meters
    class_id: int
    velocity: np.ndarray    # (2,) meters per frame; zeros for static content

    def center_at(self, t: int) -> np.ndarray:
        c = self.center.copy()
        c[:2] += self.velocity * t
        return c


@dataclass
class SceneGenConfig:
    grid_shape: tuple[int, int, int] = (32, 32, 8)
    n_classes: int = 6
    voxel_size: float = 0.5
    seq_len: int = 10
    n_dynamic: int = 2
    n_static: int = 3
    ego_speed_range: tuple[float, float] = (0.3, 0.9)    # m per frame
    ego_turn_rate_range: tuple[float, float] = (-0.12, 0.12)  # rad per frame
    fps: float = 2.0
    n_waypoints: int = 4
    downsample_factor: int = 4
    n_cameras: int = 2
    image_size: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if self.n_classes < 4:
            raise ValueError("need at least 4 classes (free, road, vehicle, obstacle)")
        if self.seq_len < 2:
            raise ValueError("sequence length must be >= 2")
        H, W, D = self.grid_shape
        ds = self.downsample_factor
        if H % ds or W % ds or D % ds:
            raise ValueError(
                f"grid dims {self.grid_shape} must be divisible by downsample factor {ds}"
            )


def _build_world(
    cfg: SceneGenConfig,
    rng: np.random.Generator,
    anchors: np.ndarray,
) -> list[Box]:
    """Scatter content near ``anchors`` (world xy points along the ego path)
    so every frame actually sees something besides road."""
    H, W, D = cfg.grid_shape
    vs = cfg.voxel_size
    half_extent = max(H, W) * vs / 2
    world_half = half_extent * (2.0 + 0.3 * cfg.seq_len)

    boxes: list[Box] = []
    # Road slab: the single floor voxel layer, covering the whole map.
    boxes.append(
        Box(
            center=np.array([0.0, 0.0, 0.0]),
            half_size=np.array([world_half, world_half, 0.45 * vs]),
            class_id=ROAD,
            velocity=np.zeros(2),
        )
    )
    static_classes = [OBSTACLE]
    if cfg.n_classes > BUILDING:
        static_classes.append(BUILDING)
    if cfg.n_classes > BARRIER:
        static_classes.append(BARRIER)

    def clear_of_path(xy: np.ndarray, half_xy: np.ndarray, velocity) -> bool:
        # The ego must never sit inside a box: for a moving box, check its
        # position against the ego position frame by frame.
        margin = float(np.max(half_xy)) + 1.5 * vs
        if velocity is None:
            return bool(np.min(np.hypot(*(anchors - xy).T)) > margin)
        steps = np.arange(len(anchors))[:, None]
        centers = xy[None, :] + velocity[None, :] * steps
        return bool(np.min(np.hypot(*(anchors - centers).T)) > margin)

    def place(spread: float, half_xy: np.ndarray, velocity=None) -> np.ndarray:
        # Resample until the box keeps clear (bounded so generation stays fast).
        for _ in range(50):
            anchor = anchors[rng.integers(len(anchors))]
            xy = anchor + rng.uniform(-spread, spread, size=2)
            if clear_of_path(xy, half_xy, velocity):
                return xy
        return anchors[0] + np.array([0.0, spread + np.max(half_xy) + 2 * vs])

    for i in range(cfg.n_static):
        cls = static_classes[i % len(static_classes)]
        half_xy = rng.uniform(1.0, 2.5, size=2) * vs
        xy = place(0.75 * half_extent, half_xy)
        height = rng.uniform(2.0, max(2.0, D - 2.0)) * vs
        boxes.append(
            Box(
                center=np.array([xy[0], xy[1], vs + height / 2]),
                half_size=np.array([half_xy[0], half_xy[1], height / 2]),
                class_id=cls,
                velocity=np.zeros(2),
            )
        )
    for _ in range(cfg.n_dynamic):
        half_xy = rng.uniform(1.2, 2.0, size=2) * vs
        height = rng.uniform(1.5, 3.0) * vs
        speed = rng.uniform(0.3, 1.2) * vs
        heading = rng.uniform(0, 2 * math.pi)
        velocity = speed * np.array([math.cos(heading), math.sin(heading)])
        xy = place(0.6 * half_extent, half_xy, velocity)
        boxes.append(
            Box(
                center=np.array([xy[0], xy[1], vs + height / 2]),
                half_size=np.array([half_xy[0], half_xy[1], height / 2]),
                class_id=VEHICLE,
                velocity=velocity,
            )
        )
    return boxes


def voxelize_world(
    boxes: list[Box], t: int, ego_pose: RigidTransform2D, cfg: SceneGenConfig
) -> OccupancyGrid:
    """Render the world at frame ``t`` into the ego frame given by ``ego_pose``."""
    H, W, D = cfg.grid_shape
    vs = cfg.voxel_size
    origin = OccupancyGrid.centered_origin((H, W, D), vs)

    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    ego_xy = np.stack(
        [origin[0] + ii * vs, origin[1] + jj * vs], axis=-1
    ).reshape(-1, 2)
    world_xy = ego_pose.apply(ego_xy)  # voxel centers in world coordinates
    z_centers = origin[2] + np.arange(D) * vs

    labels = np.zeros((H, W, D), dtype=np.uint8)
    for box in boxes:  # later boxes overwrite earlier ones (road first)
        c = box.center_at(t)
        in_xy = (
            (np.abs(world_xy[:, 0] - c[0]) <= box.half_size[0])
            & (np.abs(world_xy[:, 1] - c[1]) <= box.half_size[1])
        ).reshape(H, W)
        in_z = np.abs(z_centers - c[2]) <= box.half_size[2]
        if not in_xy.any() or not in_z.any():
            continue
        region = in_xy[:, :, None] & in_z[None, None, :]
        labels[region] = box.class_id
    return OccupancyGrid(labels, vs, origin)


def _ego_trajectory(
    cfg: SceneGenConfig, rng: np.random.Generator
) -> list[RigidTransform2D]:
    """World-frame ego poses; a pose maps ego coordinates to world coordinates."""
    poses = [RigidTransform2D.identity()]
    # A per-sequence driving style: hold speed/turn within a narrow band so
    # commands are temporally coherent instead of white noise.
    speed = rng.uniform(*cfg.ego_speed_range)
    turn = rng.uniform(*cfg.ego_turn_rate_range)
    for _ in range(cfg.seq_len - 1):
        speed = float(np.clip(speed + rng.normal(0, 0.05), *cfg.ego_speed_range))
        turn = float(np.clip(turn + rng.normal(0, 0.02), *cfg.ego_turn_rate_range))
        step = RigidTransform2D(theta=turn, tx=speed, ty=0.0)
        poses.append(poses[-1].compose(step))
    return poses


def _command_for(step: RigidTransform2D) -> Command:
    if abs(step.tx) < STOP_SPEED and abs(step.ty) < STOP_SPEED:
        return Command.STOP
    if step.theta > TURN_THRESHOLD:
        return Command.TURN_LEFT
    if step.theta < -TURN_THRESHOLD:
        return Command.TURN_RIGHT
    return Command.GO_STRAIGHT


def generate_synthetic_sequence(cfg: SceneGenConfig, seed: int) -> SceneSequence:
    """Deterministic synthetic clip: same (cfg, seed) gives bitwise-equal output."""
    from ..render.camera import default_rig  # local import: core must not need torch

    rng = np.random.default_rng(seed)
    poses = _ego_trajectory(cfg, rng)
    anchors = np.array([[p.tx, p.ty] for p in poses])
    boxes = _build_world(cfg, rng, anchors)

    frames = [voxelize_world(boxes, t, poses[t], cfg) for t in range(cfg.seq_len)]

    controls = []
    for t in range(cfg.seq_len - 1):
        step = poses[t].inverse().compose(poses[t + 1])
        # Waypoints preview the next few poses in the current ego frame.
        wps = []
        for j in range(1, cfg.n_waypoints + 1):
            tj = min(t + j, cfg.seq_len - 1)
            rel = poses[t].inverse().compose(poses[tj])
            wps.append([rel.tx, rel.ty])
        controls.append(
            ControlSignal(
                command=_command_for(step),
                waypoints=np.array(wps),
                gt_transform=step,
            )
        )

    palette = LabelPalette.default(cfg.n_classes)
    rig = default_rig(
        n_cameras=cfg.n_cameras,
        width=cfg.image_size[1],
        height=cfg.image_size[0],
        mount_height=min((cfg.grid_shape[2] - 0.5) * cfg.voxel_size, 1.5),
    )
    return SceneSequence(
        frames=frames,
        controls=controls,
        ego_poses=poses,
        camera_rig=rig,
        fps=cfg.fps,
        palette=palette,
    )
