from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, PixelOutOfBounds


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0:
            raise InputError("ray direction must be non-zero")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "direction", d / n)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation for a camera at ``eye`` looking at ``target``.

    Camera axes follow the image convention: x right, y down, z forward.
    """
    eye, target, up = (np.asarray(a, dtype=np.float64) for a in (eye, target, up))
    forward = target - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-12:
        # looking straight along ``up``: pick any perpendicular
        right = np.cross(forward, [0.0, 1.0, 0.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.column_stack([right, down, forward])


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera. Integer pixel coordinates address pixel centers."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = None  # camera -> world
    position: np.ndarray = None  # camera center in world

    def __post_init__(self):
        rot = np.eye(3) if self.rotation is None else np.asarray(self.rotation, dtype=np.float64)
        pos = np.zeros(3) if self.position is None else np.asarray(self.position, dtype=np.float64)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "position", pos)
        if self.width <= 0 or self.height <= 0:
            raise InputError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise InputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError("principal point must lie inside the image")
        if rot.shape != (3, 3) or not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9, rtol=0):
            raise InputError("pose rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise InputError("pose rotation must have determinant +1")

    @classmethod
    def looking_at(cls, width, height, fx, fy, eye, target, cx=None, cy=None, up=(0.0, 0.0, 1.0)):
        cx = (width - 1) / 2 if cx is None else cx
        cy = (height - 1) / 2 if cy is None else cy
        return cls(width, height, fx, fy, cx, cy, look_at(eye, target, up), np.asarray(eye, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def pixel_directions(self) -> np.ndarray:
        """Unit world-frame directions for every pixel, shape (height, width, 3)."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        d = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)
        d = d @ self.rotation.T
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def project(self, points) -> np.ndarray:
        """World points (n, 3) to pixel coordinates (n, 2); used in tests."""
        p = (np.atleast_2d(points) - self.position) @ self.rotation
        return np.column_stack([self.fx * p[:, 0] / p[:, 2] + self.cx, self.fy * p[:, 1] / p[:, 2] + self.cy])


def pixel_ray(camera: CameraModel, pixel) -> Ray:
    u, v = pixel
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise PixelOutOfBounds(f"pixel ({u}, {v}) outside {camera.width}x{camera.height} image")
    d = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    return Ray(camera.position.copy(), camera.rotation @ d)
