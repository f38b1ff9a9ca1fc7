"""Z-buffer rasterisation of triangle meshes at pixel centers.

Ties in depth resolve to the lowest triangle index, independent of how the
triangles are chunked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Pose, invert, transform_points

Z_NEAR = 1e-6
_PAIR_BUDGET = 2_000_000


@dataclass(frozen=True, eq=False)
class Raster:
    depth: np.ndarray  # (H, W) camera-frame z, inf where uncovered
    face: np.ndarray  # (H, W) triangle index, -1 where uncovered
    normals: np.ndarray  # (H, W, 3) camera-frame, facing the camera; zero where uncovered

    @property
    def valid(self):
        return self.face >= 0


def _camera_vertices(mesh, pose):
    if pose is None or pose.is_identity():
        return np.asarray(mesh.vertices, dtype=np.float64)
    return transform_points(invert(pose), mesh.vertices)


def _pixel_pairs(lo, hi, width, height, tri_ids):
    """Expand per-triangle inclusive pixel boxes ``lo..hi`` into (tri, col, row) triples."""
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, [width - 1, height - 1])
    nx = np.maximum(hi[:, 0] - lo[:, 0] + 1, 0)
    ny = np.maximum(hi[:, 1] - lo[:, 1] + 1, 0)
    n = nx * ny
    total = int(n.sum())
    if total == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    rep = np.repeat(np.arange(len(tri_ids)), n)
    start = np.cumsum(n) - n
    local = np.arange(total) - start[rep]
    col = lo[rep, 0] + local % nx[rep]
    row = lo[rep, 1] + local // nx[rep]
    return tri_ids[rep], col, row


def _triangle_batches(counts):
    """Split triangles into consecutive batches holding at most ~_PAIR_BUDGET pixel pairs."""
    out = []
    start = 0
    acc = 0
    for i, c in enumerate(counts):
        if acc and acc + c > _PAIR_BUDGET:
            out.append(slice(start, i))
            start, acc = i, 0
        acc += c
    out.append(slice(start, len(counts)))
    return out


def _projected(mesh, intr, pose, z_near):
    v = _camera_vertices(mesh, pose)
    tri = np.asarray(mesh.triangles)
    cor = v[tri]  # (T, 3, 3)
    front = np.all(cor[:, :, 2] > z_near, axis=1)
    ids = np.nonzero(front)[0]
    cor = cor[ids]
    z = cor[:, :, 2]
    uv = np.stack([intr.fx * cor[:, :, 0] / z + intr.cx, intr.fy * cor[:, :, 1] / z + intr.cy], axis=-1)
    return ids, cor, uv


def rasterize(mesh, intr, pose=None, z_near=Z_NEAR):
    H, W = intr.height, intr.width
    depth = np.full(H * W, np.inf)
    face = np.full(H * W, -1, dtype=np.int64)
    normals = np.zeros((H, W, 3))
    if mesh.is_empty:
        return Raster(depth.reshape(H, W), face.reshape(H, W), normals)
    ids, cor, uv = _projected(mesh, intr, pose, z_near)
    e1 = uv[:, 1] - uv[:, 0]
    e2 = uv[:, 2] - uv[:, 0]
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    keep = area2 != 0
    ids, cor, uv, area2 = ids[keep], cor[keep], uv[keep], area2[keep]
    n_cam = np.cross(cor[:, 1] - cor[:, 0], cor[:, 2] - cor[:, 0])
    offs = np.einsum("ij,ij->i", n_cam, cor[:, 0])
    lo = np.ceil(uv.min(axis=1) - 0.5).astype(np.int64)
    hi = np.floor(uv.max(axis=1) - 0.5).astype(np.int64)
    cnt = np.maximum(np.minimum(hi[:, 0], W - 1) - np.maximum(lo[:, 0], 0) + 1, 0) * np.maximum(
        np.minimum(hi[:, 1], H - 1) - np.maximum(lo[:, 1], 0) + 1, 0
    )
    sgn = np.sign(area2)
    local_ids = np.arange(len(ids))
    for sl in _triangle_batches(cnt):
        t, col, row = _pixel_pairs(lo[sl], hi[sl], W, H, local_ids[sl])
        if len(t) == 0:
            continue
        pu = col + 0.5
        pv = row + 0.5
        q = uv[t]
        s = sgn[t]
        inside = np.ones(len(t), dtype=bool)
        for a, b in ((0, 1), (1, 2), (2, 0)):
            ea = q[:, b] - q[:, a]
            w = ea[:, 0] * (pv - q[:, a, 1]) - ea[:, 1] * (pu - q[:, a, 0])
            inside &= w * s >= 0
        t, col, row, pu, pv = t[inside], col[inside], row[inside], pu[inside], pv[inside]
        if len(t) == 0:
            continue
        dx = (pu - intr.cx) / intr.fx
        dy = (pv - intr.cy) / intr.fy
        nn = n_cam[t]
        denom = nn[:, 0] * dx + nn[:, 1] * dy + nn[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = offs[t] / denom
        ok = np.isfinite(z) & (z > z_near)
        t, col, row, z = t[ok], col[ok], row[ok], z[ok]
        pix = row * W + col
        gid = ids[t]
        order = np.lexsort((gid, z, pix))
        pix, z, gid = pix[order], z[order], gid[order]
        first = np.ones(len(pix), dtype=bool)
        first[1:] = pix[1:] != pix[:-1]
        pix, z, gid = pix[first], z[first], gid[first]
        better = (z < depth[pix]) | ((z == depth[pix]) & (gid < face[pix]))
        depth[pix[better]] = z[better]
        face[pix[better]] = gid[better]
    depth = depth.reshape(H, W)
    face = face.reshape(H, W)
    valid = face >= 0
    if valid.any():
        v = _camera_vertices(mesh, pose)
        c = v[np.asarray(mesh.triangles)[face[valid]]]
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        rows, cols = np.nonzero(valid)
        d = np.stack(
            [(cols + 0.5 - intr.cx) / intr.fx, (rows + 0.5 - intr.cy) / intr.fy, np.ones(len(rows))],
            axis=1,
        )
        flip = np.einsum("ij,ij->i", n, d) > 0
        n[flip] = -n[flip]
        normals[valid] = n
    return Raster(depth, face, normals)


def render_depth(mesh, intr, pose=None):
    """Camera-frame z per pixel and a validity mask."""
    r = rasterize(mesh, intr, pose)
    return np.where(r.valid, r.depth, 0.0), r.valid


def render_silhouette(mesh, intr, pose=None, conservative=False, z_near=Z_NEAR):
    """Object mask of a mesh.

    With ``conservative=True`` a pixel is set when its square footprint touches
    any projected triangle, so the mask contains the projection of every point
    enclosed by a closed mesh.
    """
    if not conservative:
        return rasterize(mesh, intr, pose, z_near).valid
    H, W = intr.height, intr.width
    mask = np.zeros(H * W, dtype=bool)
    if mesh.is_empty:
        return mask.reshape(H, W)
    _, _, uv = _projected(mesh, intr, pose, z_near)
    lo = (np.ceil(uv.min(axis=1)) - 1).astype(np.int64)
    hi = np.floor(uv.max(axis=1)).astype(np.int64)
    cnt = np.maximum(np.minimum(hi[:, 0], W - 1) - np.maximum(lo[:, 0], 0) + 1, 0) * np.maximum(
        np.minimum(hi[:, 1], H - 1) - np.maximum(lo[:, 1], 0) + 1, 0
    )
    local_ids = np.arange(len(uv))
    for sl in _triangle_batches(cnt):
        t, col, row = _pixel_pairs(lo[sl], hi[sl], W, H, local_ids[sl])
        if len(t) == 0:
            continue
        q = uv[t]
        hit = np.ones(len(t), dtype=bool)
        for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            e = q[:, b] - q[:, a]
            n = np.stack([e[:, 1], -e[:, 0]], axis=1)
            # orient the edge normal away from the opposite vertex
            side = np.einsum("ij,ij->i", n, q[:, c] - q[:, a])
            n[side > 0] *= -1
            base = n[:, 0] * (col - q[:, a, 0]) + n[:, 1] * (row - q[:, a, 1])
            smin = base + np.minimum(n[:, 0], 0) + np.minimum(n[:, 1], 0)
            # degenerate (collinear) triangles keep both half-planes
            hit &= (smin <= 0) | (side == 0)
        mask[row[hit] * W + col[hit]] = True
    return mask.reshape(H, W)


def normal_map(mesh, intr, pose=None):
    """``(H, W, 4)`` array: camera-frame normal and validity flag."""
    r = rasterize(mesh, intr, pose)
    out = np.zeros((intr.height, intr.width, 4))
    out[..., :3] = r.normals
    out[..., 3] = r.valid
    return out


__all__ = ["Raster", "rasterize", "render_depth", "render_silhouette", "normal_map", "Pose"]
