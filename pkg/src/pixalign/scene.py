"""Per-object scale recovery against a scene point map, and scene composition.

Objects generated in their own pixel-aligned frame differ from the scene only
by a scale about the camera center: scaling about the origin moves a surface
point along its own pixel ray, so it changes apparent depth and size together
while leaving every pixel correspondence intact. The scale comes from the
closed-form least-squares fit ``alpha = sum<p, q> / sum<p, p>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics
from .errors import DegenerateAlignmentError, InputError, InsufficientSupportError
from .placement import CubePlacement
from .render import render_depth
from .volume import TriMesh

MIN_PIXELS = 10


@dataclass(frozen=True, eq=False)
class GlobalPointMap:
    points: np.ndarray  # (H, W, 3) scene camera frame
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if p.ndim != 3 or p.shape[2] != 3 or v.shape != p.shape[:2]:
            raise InputError(f"point map must be (H, W, 3) with an (H, W) mask, got {p.shape}, {v.shape}")
        if not np.all(np.isfinite(p[v])):
            raise InputError("valid point-map entries must be finite")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "valid", v)

    @property
    def shape(self):
        return self.valid.shape

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 4:
            raise InputError(f"packed point map must be (H, W, 4), got {a.shape}")
        valid = a[..., 3] != 0
        pts = np.where(valid[..., None], a[..., :3], 0.0)
        return cls(pts, valid)

    def to_array(self):
        out = np.zeros(self.shape + (4,))
        out[..., :3] = np.where(self.valid[..., None], self.points, 0.0)
        out[..., 3] = self.valid
        return out


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: str
    mesh: TriMesh
    visibility_mask: np.ndarray
    intrinsics: CameraIntrinsics
    placement: CubePlacement | None = None

    def __post_init__(self):
        m = np.asarray(self.visibility_mask, dtype=bool)
        if m.shape != (self.intrinsics.height, self.intrinsics.width):
            raise InputError(f"visibility mask of {self.id!r} does not match the scene image size")
        if self.mesh.is_empty:
            raise InputError(f"object {self.id!r} has an empty mesh")
        object.__setattr__(self, "visibility_mask", m)


@dataclass
class AlignmentResult:
    alpha: float
    residual_rms: float
    pixel_count: int


def object_points(obj):
    """Camera-frame surface points ``(H, W, 3)`` of the object and their validity."""
    intr = obj.intrinsics
    depth, valid = render_depth(obj.mesh, intr)
    u = np.arange(intr.width) + 0.5
    v = np.arange(intr.height) + 0.5
    uu, vv = np.meshgrid(u, v)
    pts = np.stack([(uu - intr.cx) / intr.fx * depth, (vv - intr.cy) / intr.fy * depth, depth], axis=-1)
    return pts, valid


def _fit(p, q):
    pp = float(np.einsum("ij,ij->", p, p))
    if pp <= 1e-12:
        raise DegenerateAlignmentError("object points have vanishing norm; scale is undetermined")
    alpha = float(np.einsum("ij,ij->", p, q)) / pp
    if not alpha > 0:
        raise DegenerateAlignmentError(f"least-squares scale is not positive (alpha={alpha})")
    return alpha


def align_object(obj, point_map, min_pixels=MIN_PIXELS, trim=0.0):
    """Least-squares scale of ``obj`` about the camera origin so it matches ``point_map``.

    ``trim`` drops that fraction of the worst residuals once and refits.
    """
    if point_map.shape != obj.visibility_mask.shape:
        raise InputError("point map and object mask differ in size")
    pts, depth_ok = object_points(obj)
    sel = obj.visibility_mask & point_map.valid & depth_ok
    n = int(sel.sum())
    if n < min_pixels:
        raise InsufficientSupportError(
            f"object {obj.id!r} has {n} constraint pixels, fewer than the required {min_pixels}"
        )
    p = pts[sel]
    q = point_map.points[sel]
    alpha = _fit(p, q)
    if trim > 0:
        r = np.linalg.norm(alpha * p - q, axis=1)
        kept = max(min_pixels, int(math.ceil(n * (1.0 - trim))))
        order = np.argsort(r, kind="stable")[:kept]
        p, q = p[order], q[order]
        n = len(p)
        alpha = _fit(p, q)
    res = alpha * p - q
    rms = math.sqrt(float(np.einsum("ij,ij->", res, res)) / n)
    return AlignmentResult(alpha=alpha, residual_rms=rms, pixel_count=n)


def compose_scene(objects, results):
    """Scale every object about the camera origin and concatenate the meshes."""
    objects, results = list(objects), list(results)
    if len(objects) != len(results):
        raise InputError(f"{len(objects)} objects but {len(results)} alignment results")
    verts, tris, records = [], [], []
    offset = 0
    for obj, res in zip(objects, results):
        verts.append(obj.mesh.vertices * res.alpha)
        tris.append(obj.mesh.triangles + offset)
        offset += len(obj.mesh.vertices)
        records.append({"id": obj.id, "alpha": res.alpha})
    if not verts:
        return TriMesh.empty(), records
    return TriMesh(np.concatenate(verts), np.concatenate(tris)), records
