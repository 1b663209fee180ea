"""Camera extrinsics and pinhole intrinsics.

A pose is the camera-to-world rigid transform: a point ``p`` in camera
coordinates maps to ``R @ p + t`` in world coordinates.  The camera frame
follows the computer-vision convention: +x right, +y down, +z along the
optical axis (into the scene).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CameraPose",
    "CameraIntrinsics",
    "look_at_pose",
    "rot_x",
    "rot_y",
    "rot_z",
]

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world transform: rotation (3x3, det +1) and translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err >= _ORTHO_TOL:
            raise ValueError(f"rotation not orthonormal (max |R^T R - I| = {err:.3g})")
        if np.linalg.det(R) <= 0:
            raise ValueError("rotation must have det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def position(self) -> np.ndarray:
        """World position of the camera center (equals the translation)."""
        return self.translation

    @property
    def forward(self) -> np.ndarray:
        """Optical axis direction in world coordinates (camera +z)."""
        return self.rotation[:, 2]

    def to_world(self, points_cam: np.ndarray) -> np.ndarray:
        """Map (n,3) camera-frame points into the world frame."""
        pts = np.asarray(points_cam, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def to_camera(self, points_world: np.ndarray) -> np.ndarray:
        """Map (n,3) world-frame points into the camera frame."""
        pts = np.asarray(points_world, dtype=np.float64)
        return (pts - self.translation) @ self.rotation

    def matrix(self) -> np.ndarray:
        """The 4x4 homogeneous camera-to-world matrix."""
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: image size, vertical field of view, and depth range.

    Depth is measured as Euclidean distance along the ray (time-of-flight
    style), not as the z coordinate.
    """

    width: int = 256
    height: int = 256
    vfov_deg: float = 60.0
    depth_range: tuple = (0.05, 1e9)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if not (0.0 < self.vfov_deg < 180.0):
            raise ValueError("vertical fov must be in (0, 180) degrees")
        d_near, d_far = self.depth_range
        if not (0.0 < d_near < d_far):
            raise ValueError("depth range must satisfy 0 < d_near < d_far")

    @property
    def focal_px(self) -> float:
        """Focal length in pixels, from the vertical field of view."""
        return (self.height / 2.0) / math.tan(math.radians(self.vfov_deg) / 2.0)

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions through all pixel centers, camera frame.

        Returns an (height*width, 3) array in row-major pixel order.
        """
        f = self.focal_px
        # pixel centers; for odd sizes the central pixel maps exactly to the axis
        xs = (np.arange(self.width) + 0.5 - self.width / 2.0) / f
        ys = (np.arange(self.height) + 0.5 - self.height / 2.0) / f
        xx, yy = np.meshgrid(xs, ys)
        dirs = np.stack([xx, yy, np.ones_like(xx)], axis=-1).reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return dirs


def rot_x(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def look_at_pose(eye, target) -> CameraPose:
    """Pose at ``eye`` with the optical axis through ``target``.

    The camera up direction is tied to world +z; when the optical axis is
    within 1 degree of +-z the fallback up direction is world +x, which
    keeps the construction deterministic and singularity-free.
    """
    eye = np.asarray(eye, dtype=np.float64).reshape(3)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm == 0.0:
        raise ValueError("look_at_pose: eye coincides with target")
    fwd = fwd / norm

    up = np.array([0.0, 0.0, 1.0])
    if abs(fwd @ up) > math.cos(math.radians(1.0)):
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)  # camera +y; completes the right-handed frame

    R = np.column_stack([right, down, fwd])
    return CameraPose(rotation=R, translation=eye)
