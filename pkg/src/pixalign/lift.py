"""Back-projection of multi-scale 2D feature maps into a camera-placed voxel grid.

Lifting is done in the projective direction: every voxel center is projected
into the image and the feature pyramid is sampled there. Voxels that project
behind the camera or outside the image keep zero features and are flagged
invalid.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, Pose, project_points, relative_pose, transform_points
from .errors import InputError
from .placement import voxel_centers

Z_NEAR = 1e-6


@dataclass(frozen=True, eq=False)
class FeatureMap:
    data: np.ndarray  # (height, width, channels)

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or min(a.shape) < 1:
            raise InputError(f"feature map must be (H, W, C) with positive sizes, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("feature map contains non-finite values")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    levels: tuple
    full_width: int
    full_height: int

    def __post_init__(self):
        levels = tuple(lv if isinstance(lv, FeatureMap) else FeatureMap(lv) for lv in self.levels)
        if not levels:
            raise InputError("feature pyramid needs at least one level")
        chans = {lv.channels for lv in levels}
        if len(chans) != 1:
            raise InputError(f"pyramid levels disagree on channel count: {sorted(chans)}")
        if self.full_width < 1 or self.full_height < 1:
            raise InputError("pyramid reference resolution must be positive")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def single(cls, data, full_width=None, full_height=None):
        fm = FeatureMap(data)
        return cls((fm,), full_width or fm.width, full_height or fm.height)

    @property
    def channels(self):
        return self.levels[0].channels


@dataclass(frozen=True, eq=False)
class ViewInput:
    pyramid: FeaturePyramid
    intrinsics: CameraIntrinsics
    pose: Pose = None

    def __post_init__(self):
        if self.pose is None:
            object.__setattr__(self, "pose", Pose.identity())
        if (self.intrinsics.width, self.intrinsics.height) != (
            self.pyramid.full_width,
            self.pyramid.full_height,
        ):
            raise InputError(
                "camera image size "
                f"{self.intrinsics.width}x{self.intrinsics.height} does not match pyramid "
                f"reference size {self.pyramid.full_width}x{self.pyramid.full_height}"
            )


@dataclass(frozen=True, eq=False)
class FeatureVolume:
    data: np.ndarray  # (R, R, R, C)
    valid: np.ndarray  # (R, R, R) bool
    view_count: np.ndarray  # (R, R, R) int

    @property
    def R(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return self.data.shape[3]

    def masked(self):
        return np.where(self.valid[..., None], self.data, 0.0)

    def to_dense(self):
        """``R x R x R x (C + 1)`` float32 array, last channel holding view_count."""
        return np.concatenate(
            [self.data, self.view_count[..., None].astype(np.float64)], axis=-1
        ).astype(np.float32)


def sample_bilinear(fmap, u, v, full_w, full_h, mode="bilinear"):
    """Sample one feature vector at full-resolution pixel coordinate ``(u, v)``."""
    out = _sample(fmap.data, np.array([u], dtype=np.float64), np.array([v], dtype=np.float64),
                  full_w, full_h, mode)
    return out[0]


def _sample(data, u, v, full_w, full_h, mode="bilinear"):
    h, w = data.shape[:2]
    ul = u * (w / full_w)
    vl = v * (h / full_h)
    if mode == "nearest":
        ci = np.clip(np.floor(ul).astype(np.int64), 0, w - 1)
        ri = np.clip(np.floor(vl).astype(np.int64), 0, h - 1)
        return data[ri, ci]
    if mode != "bilinear":
        raise InputError(f"unknown sampling mode {mode!r}")
    # texel centers sit at half-integers
    x = ul - 0.5
    y = vl - 0.5
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = (x - x0f)[:, None]
    fy = (y - y0f)[:, None]
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    c0 = np.clip(x0, 0, w - 1)
    c1 = np.clip(x0 + 1, 0, w - 1)
    r0 = np.clip(y0, 0, h - 1)
    r1 = np.clip(y0 + 1, 0, h - 1)
    # nested lerps: exact on constant regions and at texel centers
    top = data[r0, c0] + fx * (data[r0, c1] - data[r0, c0])
    bot = data[r1, c0] + fx * (data[r1, c1] - data[r1, c0])
    return top + fy * (bot - top)


def _sample_pyramid(pyr, u, v, mode):
    # running mean keeps identical levels bit-exact
    acc = _sample(pyr.levels[0].data, u, v, pyr.full_width, pyr.full_height, mode)
    for n, lv in enumerate(pyr.levels[1:], start=2):
        s = _sample(lv.data, u, v, pyr.full_width, pyr.full_height, mode)
        acc = acc + (s - acc) / n
    return acc


def _project_and_sample(points, view, z_near, mode):
    """Features ``(N, C)`` and validity ``(N,)`` for camera-frame points of one view."""
    intr = view.intrinsics
    u, v, z = project_points(points, intr)
    ok = (z > z_near) & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    feats = np.zeros((points.shape[0], view.pyramid.channels))
    if np.any(ok):
        feats[ok] = _sample_pyramid(view.pyramid, u[ok], v[ok], mode)
    return feats, ok


def _chunks(n, threads):
    if threads <= 1 or n < 4096:
        return [slice(0, n)]
    size = math.ceil(n / threads)
    return [slice(a, min(n, a + size)) for a in range(0, n, size)]


def _run_chunked(fn, n, threads):
    parts = _chunks(n, threads)
    if len(parts) == 1:
        fn(parts[0])
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        list(ex.map(fn, parts))


def lift_single(view, p, z_near=Z_NEAR, mode="bilinear", threads=1):
    """Feature volume of a single view; the cube lives in this view's camera frame."""
    centers = voxel_centers(p).reshape(-1, 3)
    n = centers.shape[0]
    data = np.zeros((n, view.pyramid.channels))
    valid = np.zeros(n, dtype=bool)

    def work(sl):
        f, ok = _project_and_sample(centers[sl], view, z_near, mode)
        data[sl] = f
        valid[sl] = ok

    _run_chunked(work, n, threads)
    R = p.R
    return FeatureVolume(
        data.reshape(R, R, R, -1), valid.reshape(R, R, R), valid.astype(np.int64).reshape(R, R, R)
    )


def fuse_views(views, reference, p, z_near=Z_NEAR, mode="bilinear", threads=1):
    """Average per-view lifted features in every voxel.

    The cube is placed in the camera frame of ``views[reference]``; voxel centers
    reach every other view through ``view_cam <- world <- reference_cam``.
    Features are summed in the given view order and divided by the number of
    views that see the voxel.
    """
    views = list(views)
    if not views:
        raise InputError("fuse_views needs at least one view")
    if not 0 <= reference < len(views):
        raise InputError(f"reference index {reference} out of range for {len(views)} views")
    chans = {v.pyramid.channels for v in views}
    if len(chans) != 1:
        raise InputError(f"views disagree on channel count: {sorted(chans)}")
    C = chans.pop()
    ref_pose = views[reference].pose
    rel = [None if k == reference else relative_pose(vw.pose, ref_pose) for k, vw in enumerate(views)]

    centers = voxel_centers(p).reshape(-1, 3)
    n = centers.shape[0]
    total = np.zeros((n, C))
    count = np.zeros(n, dtype=np.int64)

    def work(sl):
        pts = centers[sl]
        acc = np.zeros((pts.shape[0], C))
        cnt = np.zeros(pts.shape[0], dtype=np.int64)
        for vw, pose in zip(views, rel):
            local = pts if pose is None else transform_points(pose, pts)
            f, ok = _project_and_sample(local, vw, z_near, mode)
            first = ok & (cnt == 0)
            more = ok & (cnt > 0)
            acc[first] = f[first]
            acc[more] = acc[more] + f[more]
            cnt += ok
        total[sl] = acc
        count[sl] = cnt

    _run_chunked(work, n, threads)
    valid = count > 0
    data = np.zeros_like(total)
    data[valid] = total[valid] / count[valid][:, None]
    R = p.R
    return FeatureVolume(data.reshape(R, R, R, C), valid.reshape(R, R, R), count.reshape(R, R, R))


def condition_add(feature_volume, target):
    """Add a feature volume onto an equally shaped target (e.g. a noise volume)."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != feature_volume.data.shape:
        raise InputError(
            f"target shape {target.shape} does not match feature volume {feature_volume.data.shape}"
        )
    return target + feature_volume.masked()
