"""Pinhole cameras rigged in the ego frame.

Camera coordinates follow the usual computer-vision convention: +z looks
forward, +x right, +y down.  ``extrinsic`` maps ego/world points to camera
points, X_cam = R @ X + t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class Camera:
    K: np.ndarray          # (3, 3) intrinsics, pixels
    extrinsic: np.ndarray  # (4, 4) world-to-camera
    width: int
    height: int

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.extrinsic = np.asarray(self.extrinsic, dtype=np.float64).reshape(4, 4)
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        R = self.extrinsic[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
            raise ValueError("extrinsic rotation block is not orthonormal")

    @property
    def fx(self) -> float:
        return float(self.K[0, 0])

    @property
    def fy(self) -> float:
        return float(self.K[1, 1])

    def world_to_cam(self, pts: np.ndarray) -> np.ndarray:
        """(N, 3) world points to camera coordinates."""
        return pts @ self.extrinsic[:3, :3].T + self.extrinsic[:3, 3]

    def cam_center(self) -> np.ndarray:
        R, t = self.extrinsic[:3, :3], self.extrinsic[:3, 3]
        return -R.T @ t


def make_camera(
    position,
    yaw: float,
    pitch: float = 0.0,
    fov_deg: float = 90.0,
    width: int = 64,
    height: int = 64,
) -> Camera:
    """Camera at ``position`` looking along the ego +x axis when yaw=0.

    Positive ``pitch`` tilts the view downward.
    """
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([cy * cp, sy * cp, -sp])
    right = np.array([sy, -cy, 0.0])  # x_cam: to the camera's right
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])  # rows: world axes of x_cam, y_cam, z_cam
    t = -R @ np.asarray(position, dtype=np.float64)
    ext = np.eye(4)
    ext[:3, :3] = R
    ext[:3, 3] = t

    f = 0.5 * width / math.tan(math.radians(fov_deg) / 2)
    K = np.array([[f, 0, width / 2], [0, f, height / 2], [0, 0, 1.0]])
    return Camera(K=K, extrinsic=ext, width=width, height=height)


def default_rig(
    n_cameras: int = 2,
    width: int = 64,
    height: int = 64,
    mount_height: float = 1.5,
    fov_deg: float = 60.0,
    pitch: float = 0.3,
) -> list[Camera]:
    """Evenly-yawed rig around the ego, tilted slightly down at the scene."""
    yaws = np.linspace(0, 2 * math.pi, n_cameras, endpoint=False)
    return [
        make_camera(
            position=(0.0, 0.0, mount_height),
            yaw=float(y),
            pitch=pitch,
            fov_deg=fov_deg,
            width=width,
            height=height,
        )
        for y in yaws
    ]
