"""Pinhole camera model.

Conventions used by every module: camera at the origin looking down +z,
+x to the right, +y down (image row order). Pixel ``i`` covers the
continuous coordinate interval ``[i, i + 1)`` so its center is ``i + 0.5``.
Poses are stored world-from-camera.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, InputError


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(math.isfinite(float(x)) for x in vals):
            raise InputError("camera intrinsics must be finite")
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise InputError("image width/height must be integers")
        if self.width < 1 or self.height < 1:
            raise InputError(f"image size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def is_square(self):
        return self.width == self.height

    def fov_deg(self):
        """Horizontal full field of view implied by fx and the image width."""
        return math.degrees(2.0 * math.atan((self.width / 2.0) / self.fx))


def _as_rotation(rotation):
    r = np.array(rotation, dtype=np.float64).reshape(3, 3)
    if not np.all(np.isfinite(r)):
        raise InputError("rotation must be finite")
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
        raise InputError("rotation must be orthonormal with determinant +1")
    return r


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping camera-frame points into the world frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _as_rotation(self.rotation)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise InputError("translation must be finite")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InputError("last row of a rigid 4x4 transform must be (0, 0, 0, 1)")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_identity(self):
        return np.array_equal(self.rotation, np.eye(3)) and not np.any(self.translation)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.array(self.origin, dtype=np.float64).reshape(3)
        d = np.array(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise InputError("ray direction must be non-zero")
        if abs(n - 1.0) > 1e-12:
            d = d / n
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t):
        return self.origin + t * self.direction


def project(point, intr):
    """Project a camera-frame point to continuous pixel coordinates ``(u, v, z)``."""
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise BehindCameraError(f"point has non-positive depth z={z}")
    return intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy, z


def project_points(points, intr):
    """Vectorised projection of an ``(N, 3)`` array; no depth check is made."""
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * x / z + intr.cx
        v = intr.fy * y / z + intr.cy
    return u, v, z


def unproject(u, v, intr):
    d = np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
    return Ray(np.zeros(3), d / np.linalg.norm(d))


def unproject_points(u, v, intr):
    """Vectorised :func:`unproject`: unit ray directions ``(..., 3)`` for pixel coordinates."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def pixel_rays(intr):
    """Unnormalised ray directions ``(H, W, 3)`` through every pixel center, z-component 1."""
    u = np.arange(intr.width) + 0.5
    v = np.arange(intr.height) + 0.5
    uu, vv = np.meshgrid(u, v)
    return np.stack([(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1)


def fov_to_intrinsics(fov_deg, width, height):
    if not 0.0 < fov_deg < 180.0:
        raise InputError(f"field of view must lie in (0, 180) degrees, got {fov_deg}")
    f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return CameraIntrinsics(f, f, width / 2.0, height / 2.0, width, height)


def transform_point(pose, point):
    return pose.rotation @ np.asarray(point, dtype=np.float64) + pose.translation


def transform_points(pose, points):
    """Apply a pose to ``(..., 3)`` points with a fixed per-component evaluation order.

    Written out elementwise (no matmul) so results are reproducible bit for bit
    against scalar code evaluating ``r0*x + r1*y + r2*z + t``.
    """
    p = np.asarray(points, dtype=np.float64)
    r, t = pose.rotation, pose.translation
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    out = np.empty_like(p)
    for a in range(3):
        out[..., a] = r[a, 0] * x + r[a, 1] * y + r[a, 2] * z + t[a]
    return out


def compose(a_from_b, b_from_c):
    """Pose mapping frame c into frame a."""
    return Pose(a_from_b.rotation @ b_from_c.rotation, a_from_b.rotation @ b_from_c.translation + a_from_b.translation)


def invert(pose):
    rt = pose.rotation.T
    return Pose(rt, -(rt @ pose.translation))


def relative_pose(target_world_from_cam, source_world_from_cam):
    """target_cam <- world <- source_cam."""
    return compose(invert(target_world_from_cam), source_world_from_cam)


def look_at(position, target, down_hint=(0.0, 1.0, 0.0)):
    """World-from-camera pose of a camera at ``position`` looking at ``target`` (+y down)."""
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    z = z / np.linalg.norm(z)
    hint = np.asarray(down_hint, dtype=np.float64)
    if np.linalg.norm(np.cross(hint, z)) < 1e-6:
        hint = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    x = np.cross(hint, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z], axis=1), position)
