import numpy as np
import pytest

from oracles import naive_carve
from pixalign.camera import CameraIntrinsics, Pose, fov_to_intrinsics, look_at, relative_pose
from pixalign.errors import InputError
from pixalign.evaluate import chamfer, sample_surface
from pixalign.hullgen import MaskView, carve, generate_mesh
from pixalign.placement import CubePlacement, auto_place, voxel_centers
from pixalign.render import render_silhouette
from pixalign.synth import SyntheticCase, analytic_sphere_points, box_mesh, make_scene
from pixalign.volume import marching_cubes, sdf_from_occupancy


@pytest.fixture(scope="module")
def sphere_scene():
    return make_scene(SyntheticCase(shape="sphere", views=6, grid=64, size=256))


def sphere_truth(p, r=0.3):
    return np.linalg.norm(voxel_centers(p) - p.center, axis=-1) <= r


def random_mask_views(rng, p, n):
    views = []
    for k in range(n):
        w, h = int(rng.integers(5, 14)), int(rng.integers(5, 14))
        if k == 0:
            intr = fov_to_intrinsics(float(rng.uniform(30, 80)), w, h)
            pose = Pose.identity()
        else:
            f = float(rng.uniform(4, 12))
            intr = CameraIntrinsics(f, f, w / 2, h / 2, w, h)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            pose = look_at(p.center + rng.uniform(1.0, 3.0) * direction, p.center)
        views.append(MaskView(rng.random((h, w)) < 0.7, intr, pose))
    return views


def oracle_carve(views, p):
    ref = views[0].pose
    rel = [None]
    for vw in views[1:]:
        rp = relative_pose(vw.pose, ref)
        rel.append((rp.rotation.tolist(), rp.translation.tolist()))
    masks = [(vw.mask, (vw.intrinsics.fx, vw.intrinsics.fy, vw.intrinsics.cx, vw.intrinsics.cy,
                        vw.intrinsics.width, vw.intrinsics.height)) for vw in views]
    return naive_carve(masks, rel, p.d, p.s, p.R)


@pytest.mark.parametrize("seed", range(6))
def test_carve_matches_naive(seed):
    rng = np.random.default_rng(seed)
    p = auto_place(50, 1.0, int(rng.integers(2, 9)))
    views = random_mask_views(rng, p, 3)
    np.testing.assert_array_equal(carve(views, 0, p).bits, oracle_carve(views, p))


def test_full_mask_gives_frustum():
    p = CubePlacement(0.2, 1.0, 10)
    intr = fov_to_intrinsics(60, 16, 16)
    occ = carve([MaskView(np.ones((16, 16), dtype=bool), intr)], 0, p)
    c = voxel_centers(p)
    u = intr.fx * c[..., 0] / c[..., 2] + intr.cx
    v = intr.fy * c[..., 1] / c[..., 2] + intr.cy
    frustum = (c[..., 2] > 1e-6) & (u >= 0) & (u < 16) & (v >= 0) & (v < 16)
    assert 0 < frustum.sum() < 1000
    np.testing.assert_array_equal(occ.bits, frustum)


def test_carve_errors():
    p = CubePlacement(1.0, 1.0, 4)
    with pytest.raises(InputError):
        carve([], 0, p)
    intr = fov_to_intrinsics(60, 8, 8)
    with pytest.raises(InputError):
        carve([MaskView(np.ones((8, 8)), intr)], 1, p)
    with pytest.raises(InputError):
        MaskView(np.ones((8, 7)), intr)


def test_visual_hull_contains_truth(sphere_scene):
    sc = sphere_scene
    p = sc.placement
    occ = carve(sc.mask_views(), 0, p).bits
    truth = sphere_truth(p)
    assert np.all(occ[truth])
    assert (occ & truth).sum() / (occ | truth).sum() >= 0.9


def test_box_hull_contains_truth():
    sc = make_scene(SyntheticCase(shape="box", views=4, grid=32, size=128))
    p = sc.placement
    occ = carve(sc.mask_views(), 0, p).bits
    c = voxel_centers(p) - p.center
    truth = np.all(np.abs(c) <= np.array(sc.case.half_extents), axis=-1)
    assert truth.any() and np.all(occ[truth])


def test_count_non_increasing_with_views(sphere_scene):
    sc = sphere_scene
    views = sc.mask_views()
    counts = [carve(views[:n], 0, sc.placement).count() for n in range(1, 7)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    # adding a view can only remove voxels when every view sees the whole cube
    prev = carve(views[:2], 0, sc.placement).bits
    for n in range(3, 7):
        cur = carve(views[:n], 0, sc.placement).bits
        assert not np.any(cur & ~prev)
        prev = cur


def test_generated_mesh_close_to_sphere(sphere_scene):
    sc = sphere_scene
    p = sc.placement
    mesh = generate_mesh(sc.mask_views(), 0, p)
    assert mesh.is_watertight() and mesh.euler_characteristic() == 2
    a = analytic_sphere_points(p.center, 0.3, 10000, seed=3)
    b = sample_surface(mesh, 10000, seed=4)
    assert chamfer(a, b, squared=False) <= 2 * p.pitch


def test_reference_silhouette_round_trip(sphere_scene):
    sc = sphere_scene
    mesh = generate_mesh(sc.mask_views(), 0, sc.placement)
    intr, pose = sc.cameras[0]
    sil = render_silhouette(mesh, intr, pose)
    ref = sc.masks[0]
    assert (sil & ref).sum() / (sil | ref).sum() >= 0.95


def test_all_false_masks_give_empty_mesh():
    p = auto_place(60, 1.0, 8)
    intr = fov_to_intrinsics(60, 8, 8)
    assert generate_mesh([MaskView(np.zeros((8, 8), dtype=bool), intr)], 0, p).is_empty


def test_smooth_width_zero_is_plain_pipeline():
    sc = make_scene(SyntheticCase(shape="box", views=3, grid=16, size=64))
    views = sc.mask_views()
    got = generate_mesh(views, 0, sc.placement, smooth_width=0)
    ref = marching_cubes(sdf_from_occupancy(carve(views, 0, sc.placement)))
    np.testing.assert_array_equal(got.vertices, ref.vertices)
    np.testing.assert_array_equal(got.triangles, ref.triangles)


def test_conservative_masks_cover_mesh():
    # every pixel the mesh touches is set, so no true voxel can be vetoed
    p = auto_place(60, 1.0, 8)
    mesh = box_mesh((0.2, 0.2, 0.2), p.center)
    intr = fov_to_intrinsics(60, 32, 32)
    loose = render_silhouette(mesh, intr, conservative=True)
    tight = render_silhouette(mesh, intr)
    assert np.all(loose[tight]) and loose.sum() >= tight.sum()
