"""Pixel-aligned voxel lifting, silhouette carving, mesh/SDF tools and fidelity metrics."""
from .camera import (
    CameraIntrinsics,
    Pose,
    Ray,
    compose,
    fov_to_intrinsics,
    invert,
    project,
    transform_point,
    unproject,
    unproject_points,
)
from .estimators import FeatureLifter, SceneAligner, VisualHullGenerator
from .evaluate import (
    GeoMetrics,
    NormalMap,
    NormalMetrics,
    PointCloud,
    chamfer,
    emd,
    fscore,
    normal_metrics,
    render_depth,
    render_normals,
    sample_surface,
)
from .hullgen import MaskView, carve, generate_mesh
from .lift import (
    FeatureMap,
    FeaturePyramid,
    FeatureVolume,
    ViewInput,
    condition_add,
    fuse_views,
    lift_single,
    sample_bilinear,
)
from .placement import CubePlacement, auto_place, pixel_voxel_correspondence, voxel_center
from .scene import AlignmentResult, GlobalPointMap, SceneObject, align_object, compose_scene
from .volume import (
    OccupancyGrid,
    SdfGrid,
    TriMesh,
    marching_cubes,
    occupancy_from_sdf,
    sdf_from_occupancy,
    voxelize_sdf,
)

__version__ = "0.1.0"
