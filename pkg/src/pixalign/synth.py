"""Synthetic test scenes: analytic shapes inside the auto-placed cube seen by a camera rig.

View 0 is always the reference camera at the origin (identity pose) with the
cube auto-placed in its frustum. The other cameras point at the cube center
from far enough away that the whole cube is in view, along directions spread
as far apart as possible (antipodal directions count as duplicates since they
see nearly the same silhouette). Camera distance and FoV jitter default to zero; they are
exposed for experiments, not taken from any published protocol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import Pose, fov_to_intrinsics, look_at
from .errors import InputError
from .placement import DEFAULT_FOV, auto_place
from .render import rasterize, render_silhouette
from .rng import XorShift64Star
from .volume import TriMesh

SHAPES = ("sphere", "box", "torus")


# -- analytic meshes ------------------------------------------------------------

def icosphere(radius=1.0, subdivisions=3, center=(0.0, 0.0, 0.0), circumscribe=False):
    """Subdivided icosahedron.

    Vertices lie on the sphere by default (the polytope is inscribed). With
    ``circumscribe=True`` the vertices are pushed out until every face plane is
    at least ``radius`` from the center, so the polytope encloses the sphere.
    """
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    v = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    V = np.array(v)
    F = np.array(faces, dtype=np.int64)
    scale = radius
    if circumscribe:
        scale = radius / min_face_distance(V, F)
    return TriMesh(V * scale + np.asarray(center, dtype=np.float64), F)


def min_face_distance(vertices, faces, center=(0.0, 0.0, 0.0)):
    """Smallest distance from ``center`` to the plane of any face."""
    c = vertices[faces] - np.asarray(center)
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return float(np.abs(np.einsum("ij,ij->i", n, c[:, 0])).min())


def box_mesh(half_extents, center=(0.0, 0.0, 0.0)):
    hx, hy, hz = half_extents
    corners = np.array(
        [[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64
    )
    # corner index = 4*ix + 2*iy + iz
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5),  # -x, +x
        (0, 4, 5, 1), (2, 3, 7, 6),  # -y, +y
        (0, 2, 6, 4), (1, 5, 7, 3),  # -z, +z
    ]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return TriMesh(corners + np.asarray(center, dtype=np.float64), np.array(tris, dtype=np.int64))


def torus_mesh(major, minor, center=(0.0, 0.0, 0.0), segments=64, rings=32):
    """Torus around the y axis, outward-facing triangles."""
    i = np.arange(segments)
    j = np.arange(rings)
    th = 2 * math.pi * i / segments
    ph = 2 * math.pi * j / rings
    T, P = np.meshgrid(th, ph, indexing="ij")
    r = major + minor * np.cos(P)
    verts = np.stack([r * np.cos(T), minor * np.sin(P), r * np.sin(T)], axis=-1).reshape(-1, 3)
    idx = lambda a, b: (a % segments) * rings + (b % rings)  # noqa: E731
    tris = []
    for a in range(segments):
        for b in range(rings):
            p00, p10, p01, p11 = idx(a, b), idx(a + 1, b), idx(a, b + 1), idx(a + 1, b + 1)
            tris += [(p00, p01, p11), (p00, p11, p10)]
    mesh = TriMesh(verts + np.asarray(center, dtype=np.float64), np.array(tris, dtype=np.int64))
    if mesh.signed_volume() < 0:
        mesh = mesh.flipped()
    return mesh


# -- cases ---------------------------------------------------------------------

@dataclass
class SyntheticCase:
    shape: str = "sphere"
    radius: float = 0.3
    half_extents: tuple = (0.25, 0.2, 0.15)
    major: float = 0.28
    minor: float = 0.1
    views: int = 6
    fov: float = DEFAULT_FOV
    size: int = 256
    grid: int = 64
    seed: int = 0
    subdivisions: int = 4
    dist_jitter: float = 0.0
    fov_jitter: float = 0.0

    def validate(self):
        if self.shape not in SHAPES:
            raise InputError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if self.views < 1:
            raise InputError("a synthetic case needs at least one view")
        if self.size < 1 or self.grid < 1:
            raise InputError("image size and grid resolution must be positive")
        if not 0 < self.fov < 180:
            raise InputError("field of view must lie in (0, 180) degrees")


@dataclass
class SyntheticScene:
    case: SyntheticCase
    placement: object
    mesh: TriMesh
    cameras: list = field(default_factory=list)  # (intrinsics, world_from_camera)
    masks: list = field(default_factory=list)
    normals: list = field(default_factory=list)  # (H, W, 4)
    depths: list = field(default_factory=list)  # (H, W, 2): z, valid
    point_map: np.ndarray = None  # (H, W, 4) in the reference frame

    def mask_views(self):
        from .hullgen import MaskView

        return [MaskView(m, intr, pose) for m, (intr, pose) in zip(self.masks, self.cameras)]


def shape_mesh(case, center):
    if case.shape == "sphere":
        return icosphere(case.radius, case.subdivisions, center, circumscribe=True)
    if case.shape == "box":
        return box_mesh(case.half_extents, center)
    return torus_mesh(case.major, case.minor, center)


def _spread_directions(count, rng, candidates=512):
    """``count`` unit vectors, the first pointing from the cube center back to the camera."""
    dirs = [np.array([0.0, 0.0, -1.0])]
    if count == 1:
        return dirs
    u1 = rng.random(candidates)
    u2 = rng.random(candidates)
    z = 1.0 - 2.0 * u1
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    cand = np.stack([r * np.cos(2 * math.pi * u2), r * np.sin(2 * math.pi * u2), z], axis=1)
    for _ in range(count - 1):
        sep = np.min(1.0 - np.abs(cand @ np.array(dirs).T), axis=1)
        dirs.append(cand[int(np.argmax(sep))])
    return dirs


def full_view_distance(fov_deg, s, margin=1.05):
    """Camera-to-center distance at which the cube's bounding sphere fits in the view."""
    return margin * (s * math.sqrt(3.0) / 2.0) / math.sin(math.radians(fov_deg) / 2.0)


def make_scene(case):
    case.validate()
    rng = XorShift64Star(case.seed)
    p = auto_place(case.fov, 1.0, case.grid)
    center = p.center
    mesh = shape_mesh(case, center)
    lo, hi = p.bounds()
    if np.any(mesh.vertices < lo) or np.any(mesh.vertices > hi):
        raise InputError(f"{case.shape} with the given parameters leaves the cube")

    scene = SyntheticScene(case, p, mesh)
    dist = full_view_distance(case.fov, p.s)
    for k, direction in enumerate(_spread_directions(case.views, rng)):
        fov = case.fov
        if k == 0:
            pose = Pose.identity()
        else:
            dk = dist * (1.0 + case.dist_jitter * (2.0 * rng.random() - 1.0))
            fov = case.fov * (1.0 + case.fov_jitter * (2.0 * rng.random() - 1.0))
            pose = look_at(center + dk * direction, center)
        intr = fov_to_intrinsics(fov, case.size, case.size)
        scene.cameras.append((intr, pose))
        scene.masks.append(render_silhouette(mesh, intr, pose, conservative=True))
        r = rasterize(mesh, intr, pose)
        nm = np.zeros((case.size, case.size, 4))
        nm[..., :3] = r.normals
        nm[..., 3] = r.valid
        scene.normals.append(nm)
        dm = np.zeros((case.size, case.size, 2))
        dm[..., 0] = np.where(r.valid, r.depth, 0.0)
        dm[..., 1] = r.valid
        scene.depths.append(dm)
        if k == 0:
            scene.point_map = _point_map(intr, dm[..., 0], r.valid)
    return scene


def _point_map(intr, depth, valid):
    u = np.arange(intr.width) + 0.5
    v = np.arange(intr.height) + 0.5
    uu, vv = np.meshgrid(u, v)
    out = np.zeros((intr.height, intr.width, 4))
    out[..., 0] = (uu - intr.cx) / intr.fx * depth
    out[..., 1] = (vv - intr.cy) / intr.fy * depth
    out[..., 2] = depth
    out[..., 3] = valid
    out[~valid] = 0.0
    return out


def analytic_sphere_points(center, radius, n, seed=0):
    """Uniform samples on an exact sphere."""
    rng = XorShift64Star(seed)
    u1 = rng.random(n)
    u2 = rng.random(n)
    z = 1.0 - 2.0 * u1
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    d = np.stack([r * np.cos(2 * math.pi * u2), r * np.sin(2 * math.pi * u2), z], axis=1)
    return np.asarray(center) + radius * d


__all__ = [
    "SHAPES",
    "SyntheticCase",
    "SyntheticScene",
    "analytic_sphere_points",
    "box_mesh",
    "icosphere",
    "make_scene",
    "min_face_distance",
    "torus_mesh",
]
