"""Placement of the generation cube inside a camera frustum.

The cube is axis-aligned in the camera frame, centered on the optical axis at
depth ``d`` with edge ``s``, and voxelised at ``R`` cells per axis. Index ``i``
runs along +x, ``j`` along +y and ``k`` along +z (depth).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import unproject
from .errors import InputError

DEFAULT_FOV = 40.0


@dataclass(frozen=True)
class CubePlacement:
    d: float
    s: float = 1.0
    R: int = 64

    def __post_init__(self):
        if not (math.isfinite(self.d) and math.isfinite(self.s)):
            raise InputError("placement parameters must be finite")
        if not self.s > 0:
            raise InputError(f"cube edge must be positive, got s={self.s}")
        if int(self.R) != self.R or self.R < 1:
            raise InputError(f"grid resolution must be a positive integer, got R={self.R}")
        if not self.d + self.s / 2.0 > 0:
            raise InputError("cube back face must lie in front of the camera (d + s/2 > 0)")
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "R", int(self.R))

    @property
    def pitch(self):
        return self.s / self.R

    @property
    def center(self):
        return np.array([0.0, 0.0, self.d])

    def bounds(self):
        h = self.s / 2.0
        return np.array([-h, -h, self.d - h]), np.array([h, h, self.d + h])

    def with_resolution(self, R):
        return CubePlacement(self.d, self.s, R)


def auto_place(fov_deg=DEFAULT_FOV, s=1.0, R=64):
    """Place the cube so the four image-corner rays pass through its back-face vertices.

    Square images only: the corner ray has lateral slope tan(fov/2) on both axes,
    so ``tan(fov/2) * (d + s/2) = s/2``.
    """
    if not 0.0 < fov_deg < 180.0:
        raise InputError(f"field of view must lie in (0, 180) degrees, got {fov_deg}")
    if not s > 0:
        raise InputError(f"cube edge must be positive, got s={s}")
    # 90 degrees is special-cased: tan(pi/4) rounds below 1 and d would come out ~1e-16
    t = 1.0 if fov_deg == 90.0 else math.tan(math.radians(fov_deg) / 2.0)
    d = (s / 2.0) * (1.0 / t - 1.0)
    return CubePlacement(d, s, R)


def axis_coords(p):
    """Voxel-center offsets along one axis, relative to the cube center."""
    idx = np.arange(p.R, dtype=np.float64)
    return ((idx + 0.5) / p.R - 0.5) * p.s


def voxel_center(i, j, k, p):
    for n in (i, j, k):
        if not 0 <= n < p.R:
            raise InputError(f"voxel index {(i, j, k)} outside grid of resolution {p.R}")
    return np.array(
        [
            ((i + 0.5) / p.R - 0.5) * p.s,
            ((j + 0.5) / p.R - 0.5) * p.s,
            ((k + 0.5) / p.R - 0.5) * p.s + p.d,
        ]
    )


def voxel_centers(p):
    """All voxel centers as an ``(R, R, R, 3)`` array in (i, j, k) order."""
    c = axis_coords(p)
    x, y, z = np.meshgrid(c, c, c + p.d, indexing="ij")
    return np.stack([x, y, z], axis=-1)


def _ray_box(origin, direction, lo, hi):
    t0, t1 = 0.0, math.inf
    for a in range(3):
        if direction[a] == 0.0:
            if origin[a] < lo[a] or origin[a] > hi[a]:
                return None
            continue
        ta = (lo[a] - origin[a]) / direction[a]
        tb = (hi[a] - origin[a]) / direction[a]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1


def pixel_voxel_correspondence(u, v, p, intr):
    """Voxels pierced by the ray of pixel coordinate ``(u, v)``, front to back.

    Clips the ray to the cube and marches in half-voxel steps, so voxels the ray
    only clips at a corner thinner than half a pitch may be skipped.
    """
    ray = unproject(u, v, intr)
    lo, hi = p.bounds()
    hit = _ray_box(ray.origin, ray.direction, lo, hi)
    if hit is None:
        return []
    t0, t1 = hit
    step = p.pitch / 2.0
    n = int(math.floor((t1 - t0) / step))
    ts = [t0 + m * step for m in range(n + 1)] + [t1]
    out = []
    seen = set()
    for t in ts:
        q = ray.at(t)
        idx = tuple(
            min(p.R - 1, max(0, int(math.floor((q[a] - lo[a]) / p.s * p.R)))) for a in range(3)
        )
        if idx not in seen:
            seen.add(idx)
            out.append(idx)
    return out
