"""scikit-learn style front ends over the functional API.

``X`` is a list of views (or scene objects) rather than a 2-D array; the
estimators exist so pipelines can treat lifting, carving and alignment like
any other fitted transformer, with ``get_params``/``set_params`` and cloning.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import hullgen, lift, scene
from .errors import InputError
from .validation import check_views, resolve_placement
from .volume import TriMesh, marching_cubes, sdf_from_occupancy, smooth_sdf


class FeatureLifter(TransformerMixin, BaseEstimator):
    """Lift (and fuse) per-view feature pyramids into a voxel feature volume.

    Parameters
    ----------
    grid : int
        Voxels per cube axis.
    fov, distance, scale : float or None
        Cube placement. With ``distance`` given the cube sits at that depth with
        edge ``scale``; otherwise it is auto-placed for ``fov`` (or for the FoV
        of the reference camera when ``fov`` is None).
    reference : int
        Index of the view whose camera frame holds the cube.
    """

    def __init__(self, grid=64, fov=None, distance=None, scale=1.0, reference=0, mode="bilinear",
                 z_near=lift.Z_NEAR, threads=1):
        self.grid = grid
        self.fov = fov
        self.distance = distance
        self.scale = scale
        self.reference = reference
        self.mode = mode
        self.z_near = z_near
        self.threads = threads

    def fit(self, X, y=None):
        views = check_views(X, self.reference)
        if self.mode not in ("bilinear", "nearest"):
            raise InputError(f"unknown sampling mode {self.mode!r}")
        self.placement_ = resolve_placement(
            self.grid, views[self.reference].intrinsics, self.fov, self.distance, self.scale
        )
        self.n_channels_ = views[0].pyramid.channels
        return self

    def transform(self, X):
        check_is_fitted(self, "placement_")
        views = check_views(X, self.reference)
        if len(views) == 1:
            return lift.lift_single(views[0], self.placement_, self.z_near, self.mode, self.threads)
        return lift.fuse_views(views, self.reference, self.placement_, self.z_near, self.mode, self.threads)


class VisualHullGenerator(TransformerMixin, BaseEstimator):
    """Carve an occupancy grid from silhouettes and mesh it.

    ``fit`` stores ``placement_``, ``occupancy_``, ``sdf_`` and ``mesh_``;
    ``transform`` returns the occupancy grid for new mask views.
    """

    def __init__(self, grid=64, fov=None, distance=None, scale=1.0, reference=0, smooth_width=1):
        self.grid = grid
        self.fov = fov
        self.distance = distance
        self.scale = scale
        self.reference = reference
        self.smooth_width = smooth_width

    def fit(self, X, y=None):
        views = check_views(X, self.reference, "mask view")
        if self.smooth_width < 0:
            raise InputError("smooth_width must be non-negative")
        self.placement_ = resolve_placement(
            self.grid, views[self.reference].intrinsics, self.fov, self.distance, self.scale
        )
        self.occupancy_ = hullgen.carve(views, self.reference, self.placement_)
        self.sdf_ = smooth_sdf(sdf_from_occupancy(self.occupancy_), self.smooth_width)
        self.mesh_ = marching_cubes(self.sdf_) if self.occupancy_.bits.any() else TriMesh.empty()
        return self

    def transform(self, X):
        check_is_fitted(self, "placement_")
        return hullgen.carve(check_views(X, self.reference, "mask view"), self.reference, self.placement_)


class SceneAligner(BaseEstimator):
    """Fit one scale per object against a point map, then compose the scene."""

    def __init__(self, min_pixels=scene.MIN_PIXELS, trim=0.0):
        self.min_pixels = min_pixels
        self.trim = trim

    def fit(self, X, y):
        if not isinstance(y, scene.GlobalPointMap):
            raise InputError("SceneAligner.fit expects the point map as y")
        if not 0.0 <= self.trim < 1.0:
            raise InputError("trim must lie in [0, 1)")
        self.results_ = [scene.align_object(o, y, self.min_pixels, self.trim) for o in X]
        self.alphas_ = [r.alpha for r in self.results_]
        return self

    def transform(self, X):
        check_is_fitted(self, "results_")
        mesh, self.records_ = scene.compose_scene(X, self.results_)
        return mesh

    def fit_transform(self, X, y):
        return self.fit(X, y).transform(X)
