"""Silhouette-carving stand-in for the learned pixel-aligned generator.

Each view vetoes the voxels that project onto background pixels; voxels that
no view sees stay empty. The carved occupancy goes through a distance
transform, optional box smoothing and marching cubes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, Pose, project_points, relative_pose, transform_points
from .errors import InputError
from .placement import voxel_centers
from .volume import OccupancyGrid, TriMesh, marching_cubes, sdf_from_occupancy, smooth_sdf

Z_NEAR = 1e-6


@dataclass(frozen=True, eq=False)
class MaskView:
    mask: np.ndarray  # (H, W) bool, True = object
    intrinsics: CameraIntrinsics
    pose: Pose = None

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise InputError(f"mask must be 2-D, got shape {m.shape}")
        if m.shape != (self.intrinsics.height, self.intrinsics.width):
            raise InputError(
                f"mask shape {m.shape} does not match camera size "
                f"{self.intrinsics.height}x{self.intrinsics.width}"
            )
        object.__setattr__(self, "mask", m.astype(bool))
        if self.pose is None:
            object.__setattr__(self, "pose", Pose.identity())


def _check_views(views, reference):
    views = list(views)
    if not views:
        raise InputError("at least one mask view is required")
    if not 0 <= reference < len(views):
        raise InputError(f"reference index {reference} out of range for {len(views)} views")
    return views


def carve(views, reference, p, z_near=Z_NEAR):
    """Visual-hull occupancy of the cube placed in ``views[reference]``'s camera frame."""
    views = _check_views(views, reference)
    centers = voxel_centers(p).reshape(-1, 3)
    seen = np.zeros(len(centers), dtype=bool)
    keep = np.ones(len(centers), dtype=bool)
    ref_pose = views[reference].pose
    for k, vw in enumerate(views):
        pts = centers if k == reference else transform_points(relative_pose(vw.pose, ref_pose), centers)
        intr = vw.intrinsics
        u, v, z = project_points(pts, intr)
        ok = (z > z_near) & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
        col = np.floor(u[ok]).astype(np.int64)
        row = np.floor(v[ok]).astype(np.int64)
        seen |= ok
        hit = np.ones(len(centers), dtype=bool)
        hit[ok] = vw.mask[row, col]
        keep &= hit
    return OccupancyGrid(p, (seen & keep).reshape(p.R, p.R, p.R))


def generate_mesh(views, reference, p, smooth_width=1):
    occ = carve(views, reference, p)
    if not occ.bits.any():
        return TriMesh.empty()
    sdf = smooth_sdf(sdf_from_occupancy(occ), smooth_width)
    return marching_cubes(sdf, 0.0)
