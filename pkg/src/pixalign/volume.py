"""Volumetric fields, triangle meshes, SDF voxelisation and iso-surface extraction."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from skimage import measure

from .errors import InputError
from .placement import CubePlacement, voxel_centers


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise InputError("mesh vertices must be finite")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InputError("triangle index out of range")
        if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise InputError("triangle with repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def __len__(self):
        return len(self.triangles)

    @property
    def is_empty(self):
        return len(self.triangles) == 0

    def corners(self):
        """Triangle corner coordinates, ``(T, 3, 3)``."""
        return self.vertices[self.triangles]

    def face_areas(self):
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def area(self):
        return float(self.face_areas().sum())

    def signed_volume(self):
        c = self.corners()
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def edge_counts(self):
        """Map from undirected edge ``(a, b)``, ``a < b``, to the number of incident triangles."""
        f = self.triangles
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return dict(zip(map(tuple, uniq.tolist()), counts.tolist()))

    def is_watertight(self):
        return bool(len(self.triangles)) and set(self.edge_counts().values()) == {2}

    def euler_characteristic(self):
        used = np.unique(self.triangles)
        return len(used) - len(self.edge_counts()) + len(self.triangles)

    def flipped(self):
        return TriMesh(self.vertices, self.triangles[:, ::-1])

    def transformed(self, pose):
        from .camera import transform_points

        return TriMesh(transform_points(pose, self.vertices), self.triangles)

    def scaled(self, factor):
        return TriMesh(self.vertices * factor, self.triangles)


@dataclass(frozen=True, eq=False)
class SdfGrid:
    placement: CubePlacement
    values: np.ndarray  # (R, R, R)

    def __post_init__(self):
        a = np.array(self.values, dtype=np.float64)
        R = self.placement.R
        if a.shape != (R, R, R):
            raise InputError(f"SDF grid shape {a.shape} does not match resolution {R}")
        if not np.all(np.isfinite(a)):
            raise InputError("SDF values must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "values", a)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    placement: CubePlacement
    bits: np.ndarray  # (R, R, R) bool

    def __post_init__(self):
        a = np.array(self.bits, dtype=bool)
        R = self.placement.R
        if a.shape != (R, R, R):
            raise InputError(f"occupancy shape {a.shape} does not match resolution {R}")
        a.setflags(write=False)
        object.__setattr__(self, "bits", a)

    def count(self):
        return int(self.bits.sum())


# -- point / mesh queries -----------------------------------------------------

class _Tris:
    """Per-triangle quantities for distance queries, packed as rows of one ``(34, T)`` array."""

    def __init__(self, cor):
        a, b, c = (np.ascontiguousarray(cor[:, k].T) for k in range(3))
        self.a, self.b, self.c = a, b, c
        e = [b - a, c - b, a - c]
        n = np.cross(e[0].T, -e[2].T).T
        nn = np.sqrt((n * n).sum(axis=0))
        ok = nn > 0
        n = np.where(ok, n / np.where(ok, nn, 1.0), 0.0)
        # in-plane inward edge normals; a point projects inside when all three dots are >= 0
        side = [np.cross(n.T, x.T).T for x in e]
        inv = []
        for x in e:
            ll = (x * x).sum(axis=0)
            inv.append(np.where(ll > 0, 1.0 / np.where(ll > 0, ll, 1.0), 0.0)[None, :])
        rows = [a, b, c] + e + side + inv + [n, (~ok).astype(np.float64)[None, :]]
        self.data = np.ascontiguousarray(np.concatenate(rows))
        self.cen = (a + b + c) / 3.0
        self.rad = np.sqrt(np.max([((v - self.cen) ** 2).sum(axis=0) for v in (a, b, c)], axis=0))

    def sq_dist(self, p, sel=None):
        """Squared distances between points ``p (3, P, 1)`` and triangles ``sel`` (broadcast)."""
        g = self.data[:, None, :] if sel is None else self.data[:, sel]
        best = None
        inside = None
        for k in range(3):
            o, e, s, inv = g[3 * k:3 * k + 3], g[9 + 3 * k:12 + 3 * k], g[18 + 3 * k:21 + 3 * k], g[27 + k]
            d0, d1, d2 = p[0] - o[0], p[1] - o[1], p[2] - o[2]
            t = (d0 * e[0] + d1 * e[1] + d2 * e[2]) * inv
            np.clip(t, 0.0, 1.0, out=t)
            r0, r1, r2 = d0 - t * e[0], d1 - t * e[1], d2 - t * e[2]
            sq = r0 * r0 + r1 * r1 + r2 * r2
            best = sq if best is None else np.minimum(best, sq)
            ins = d0 * s[0] + d1 * s[1] + d2 * s[2] >= 0
            inside = ins if inside is None else inside & ins
        n = g[30:33]
        h = (p[0] - g[0]) * n[0] + (p[1] - g[1]) * n[1] + (p[2] - g[2]) * n[2]
        return np.where(inside & (g[33] == 0), np.minimum(h * h, best), best)


def _solid_angles(p, a, b, c):
    """Signed solid angles of triangles seen from points ``p (P, 3)``, ``(P, T)``.

    Corners ``a, b, c`` are component arrays ``(3, T)``.
    Van Oosterom & Strackee: tan(omega / 2) = det[ra rb rc] / (|ra||rb||rc| + ...).
    """
    p = np.asarray(p, dtype=np.float64)
    ra = [a[k][None, :] - p[:, k, None] for k in range(3)]
    rb = [b[k][None, :] - p[:, k, None] for k in range(3)]
    rc = [c[k][None, :] - p[:, k, None] for k in range(3)]
    la = np.sqrt(ra[0] * ra[0] + ra[1] * ra[1] + ra[2] * ra[2])
    lb = np.sqrt(rb[0] * rb[0] + rb[1] * rb[1] + rb[2] * rb[2])
    lc = np.sqrt(rc[0] * rc[0] + rc[1] * rc[1] + rc[2] * rc[2])
    num = (
        ra[0] * (rb[1] * rc[2] - rb[2] * rc[1])
        + ra[1] * (rb[2] * rc[0] - rb[0] * rc[2])
        + ra[2] * (rb[0] * rc[1] - rb[1] * rc[0])
    )
    ab = ra[0] * rb[0] + ra[1] * rb[1] + ra[2] * rb[2]
    bc = rb[0] * rc[0] + rb[1] * rc[1] + rb[2] * rc[2]
    ca = rc[0] * ra[0] + rc[1] * ra[1] + rc[2] * ra[2]
    den = la * lb * lc + ab * lc + bc * la + ca * lb
    return 2.0 * np.arctan2(num, den)


def _point_chunks(n_points, n_tris, budget=400_000):
    step = max(1, budget // max(1, n_tris))
    return [slice(a, min(n_points, a + step)) for a in range(0, n_points, step)]


def _map_chunks(fn, n_points, n_tris, threads):
    parts = _point_chunks(n_points, n_tris)
    if threads <= 1 or len(parts) == 1:
        for sl in parts:
            fn(sl)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(fn, parts))


def unsigned_distance(mesh, points, threads=1):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tris = _Tris(mesh.corners())
    out = np.empty(len(points))

    def work(sl):
        out[sl] = np.sqrt(tris.sq_dist(points[sl].T[:, :, None]).min(axis=1))

    _map_chunks(work, len(points), tris.a.shape[1], threads)
    return out


def winding_number(mesh, points, threads=1):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cor = mesh.corners()
    a, b, c = (np.ascontiguousarray(cor[:, k].T) for k in range(3))
    out = np.empty(len(points))

    def work(sl):
        out[sl] = _solid_angles(points[sl], a, b, c).sum(axis=1) / (4.0 * math.pi)

    _map_chunks(work, len(points), len(cor), threads)
    return out


def _oriented_closed(mesh):
    """True when every directed edge appears once and its reverse appears once."""
    f = mesh.triangles
    if not len(f):
        return False
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    if len(np.unique(e, axis=0)) != len(e):
        return False
    fwd = set(map(tuple, e.tolist()))
    return all((b, a) in fwd for a, b in fwd)


_LEAF_POINTS = 128
_LEAF_PAIRS = 131072


def _cull_tree(pts, cor, tris, closed):
    """Split points into octree leaves, each with the triangles that can be nearest to it.

    Distance to the surface is 1-Lipschitz, so for a block of radius ``rho``
    around ``m`` only triangles with ``D_t(m) <= min D(m) + 2 rho`` can be
    nearest to any of its points. On an oriented closed surface the winding
    number is constant inside a ball that misses the surface, so such a block
    takes its sign from its center.
    """
    scale = max(1.0, float(np.abs(cor).max()), float(np.abs(pts).max()))
    slack = 1e-9 * scale
    inside = np.zeros(len(pts), dtype=bool)
    signed = np.zeros(len(pts), dtype=bool)
    leaves = []
    stack = [(np.arange(len(pts)), np.arange(len(cor)), False)]
    while stack:
        idx, cand, known = stack.pop()
        q = pts[idx]
        m = (q.min(axis=0) + q.max(axis=0)) / 2.0
        rho = math.sqrt(float(np.einsum("ij,ij->i", q - m, q - m).max()))
        dm = np.sqrt(tris.sq_dist(m[:, None, None], cand)[0])
        dmin = float(dm.min())
        cand = cand[dm <= dmin + 2.0 * rho + slack]
        if not known and closed and dmin > rho + slack:
            w = _solid_angles(m[None, :], tris.a, tris.b, tris.c).sum()
            inside[idx] = abs(w / (4.0 * math.pi)) >= 0.5
            signed[idx] = True
            known = True
        if len(idx) <= _LEAF_POINTS or len(idx) * len(cand) <= _LEAF_PAIRS or rho == 0.0:
            leaves.append((idx, cand, int(cand[np.argmin(dm[dm <= dmin + 2.0 * rho + slack])])))
            continue
        code = (q[:, 0] > m[0]) + 2 * (q[:, 1] > m[1]) + 4 * (q[:, 2] > m[2])
        for k in range(8):
            sub = idx[code == k]
            if len(sub):
                stack.append((sub, cand, known))
    return leaves, inside, signed


def _spread_signs(pts, dist, inside, known, slack):
    """Copy signs between points whose separating segment provably misses the surface.

    The open ball of radius ``dist[p]`` around ``p`` contains no surface point,
    so ``q`` with ``|p - q| < max(dist[p], dist[q])`` lies in the same component.
    Only valid on oriented closed surfaces. Updates ``inside`` and ``known``.
    """
    while True:
        unk = np.flatnonzero(~known)
        if not len(unk):
            return
        src = np.flatnonzero(known)
        gap, j = cKDTree(pts[src]).query(pts[unk])
        q = src[j]
        ok = gap < np.maximum(dist[unk], dist[q]) - slack
        if not ok.any():
            return
        inside[unk[ok]] = inside[q[ok]]
        known[unk[ok]] = True


def signed_distance(mesh, points, threads=1):
    """Signed distance to ``mesh``, negative inside.

    Inside/outside comes from the generalised winding number with the threshold
    applied to its magnitude, so inverted windings give the same sign. Exact;
    the octree only discards triangles that provably cannot be nearest.
    """
    if mesh.is_empty:
        raise InputError("cannot compute the SDF of an empty mesh")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.empty(len(pts))
    if not len(pts):
        return out
    cor = mesh.corners()
    tris = _Tris(cor)
    leaves, inside, signed = _cull_tree(pts, cor, tris, _oriented_closed(mesh))
    slack = 1e-9 * max(1.0, float(np.abs(cor).max()), float(np.abs(pts).max()))

    def work(leaf):
        # per-point pruning: a triangle whose bounding sphere is farther than the
        # distance to the block's nearest triangle cannot be nearest
        idx, cand, near = leaf
        q = pts[idx].T
        ub = np.sqrt(tris.sq_dist(q, np.full(len(idx), near)))
        c = tris.cen[:, cand]
        gap = np.sqrt(
            (q[0][:, None] - c[0]) ** 2 + (q[1][:, None] - c[1]) ** 2 + (q[2][:, None] - c[2]) ** 2
        ) - tris.rad[cand]
        rows, cols = np.nonzero(gap <= ub[:, None] + slack)
        sq = tris.sq_dist(q[:, rows], cand[cols])
        starts = np.searchsorted(rows, np.arange(len(idx)))
        out[idx] = np.sqrt(np.minimum.reduceat(sq, starts))

    if threads <= 1:
        for leaf in leaves:
            work(leaf)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, leaves))
    if signed.any():
        _spread_signs(pts, out, inside, signed, slack)
    rest = np.flatnonzero(~signed)
    if len(rest):
        inside[rest] = np.abs(winding_number(mesh, pts[rest], threads)) >= 0.5
    return np.where(inside, -out, out)


def voxelize_sdf(mesh, p, threads=1):
    pts = voxel_centers(p).reshape(-1, 3)
    vals = signed_distance(mesh, pts, threads)
    return SdfGrid(p, vals.reshape(p.R, p.R, p.R))


# -- iso-surface ------------------------------------------------------------

def _refine_on_edges(verts, vol, iso):
    """Re-solve float32 marching-cubes vertices in float64 along their grid edges."""
    R = np.array(vol.shape)
    out = verts.astype(np.float64)
    frac = np.abs(out - np.round(out))
    axis = np.argmax(frac, axis=1)
    nodes = np.round(out).astype(np.int64)
    for n in range(len(out)):
        a = axis[n]
        best = None
        base = nodes[n].copy()
        fl = int(math.floor(out[n, a]))
        for lo in (fl - 1, fl, fl + 1):
            if lo < 0 or lo + 1 >= R[a]:
                continue
            i0 = base.copy()
            i0[a] = lo
            i1 = i0.copy()
            i1[a] = lo + 1
            f0 = vol[tuple(i0)] - iso
            f1 = vol[tuple(i1)] - iso
            if f0 * f1 > 0 or f0 == f1:
                continue
            pos = lo + f0 / (f0 - f1)
            gap = abs(pos - out[n, a])
            if best is None or gap < best[0]:
                best = (gap, pos)
        if best is not None:
            out[n, a] = best[1]
    return out


def marching_cubes(grid, iso=0.0):
    """Classic marching cubes (no ambiguity resolution).

    Vertices are in camera-frame units; triangles are wound so normals point
    toward increasing SDF.
    """
    vol = np.asarray(grid.values, dtype=np.float64)
    p = grid.placement
    if p.R < 2:
        raise InputError("marching cubes needs a grid of at least 2 cells per axis")
    if not (vol.min() <= iso <= vol.max()) or vol.min() == vol.max():
        return TriMesh.empty()
    try:
        verts, faces, _, _ = measure.marching_cubes(
            vol, level=iso, method="lorensen", gradient_direction="descent", allow_degenerate=False
        )
    except (ValueError, RuntimeError):
        return TriMesh.empty()
    if len(faces) == 0:
        return TriMesh.empty()
    idx = _refine_on_edges(verts, vol, iso)
    xyz = ((idx + 0.5) / p.R - 0.5) * p.s
    xyz[:, 2] += p.d
    return _compact(xyz, faces)


def _compact(verts, faces):
    """Merge coincident vertices and drop triangles that collapse."""
    uniq, inv = np.unique(verts, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    if len(uniq) == len(verts):
        return TriMesh(verts, faces)
    f = inv[faces]
    keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    return TriMesh(uniq, f[keep])


def occupancy_from_sdf(grid, threshold=0.0):
    return OccupancyGrid(grid.placement, grid.values <= threshold)


def sdf_from_occupancy(occ):
    """Two-sided exact Euclidean distance transform in world units."""
    p = occ.placement
    bits = occ.bits
    diag = p.s * math.sqrt(3.0)
    if not bits.any():
        return SdfGrid(p, np.full(bits.shape, diag))
    if bits.all():
        return SdfGrid(p, np.full(bits.shape, -diag))
    outside = ndimage.distance_transform_edt(~bits, sampling=p.pitch)
    inside = ndimage.distance_transform_edt(bits, sampling=p.pitch)
    return SdfGrid(p, np.where(bits, -inside, outside))


def smooth_sdf(grid, width=1):
    """Box-filter the SDF with a ``(2w+1)^3`` kernel; ``width=0`` is a pass-through."""
    if width <= 0:
        return grid
    vals = ndimage.uniform_filter(grid.values, size=2 * int(width) + 1, mode="nearest")
    return SdfGrid(grid.placement, vals)
