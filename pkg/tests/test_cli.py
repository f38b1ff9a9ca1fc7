import json

import numpy as np
import pytest

from pixalign import __version__
from pixalign.cli import run
from pixalign.io import encode_pxt, read_obj, read_pxt


def make_case(root):
    """Small synthetic case plus random feature pyramids for every view."""
    assert run(["synth", "--shape", "sphere", "--views", "3", "--grid", "12", "--size", "40",
                "--subdivisions", "2", "--seed", "1", "-o", str(root / "s")]) == 0
    rng = np.random.default_rng(0)
    for k in range(3):
        (root / f"f{k}a.pxt").write_bytes(encode_pxt(rng.normal(size=(40, 40, 3)).astype(np.float32)))
        (root / f"f{k}b.pxt").write_bytes(encode_pxt(rng.normal(size=(10, 10, 3)).astype(np.float32)))
    mask = read_pxt(root / "s" / "mask_0.pxt")
    (root / "vis.pxt").write_bytes(encode_pxt(mask))
    return root


@pytest.fixture(scope="module")
def case(tmp_path_factory):
    return make_case(tmp_path_factory.mktemp("case"))


def commands(root, out):
    s = root / "s"
    views = [f"{root}/f{k}a.pxt,{root}/f{k}b.pxt:{s}/cam_{k}.json" for k in range(3)]
    masks = [f"{s}/mask_{k}.pxt:{s}/cam_{k}.json" for k in range(3)]
    return {
        "place": ["place", "--fov", "60", "-o", f"{out}/place.json"],
        "lift": ["lift", "--features", views[0].split(":")[0], "--camera", f"{s}/cam_0.json",
                 "--grid", "10", "-o", f"{out}/lift.pxt"],
        "fuse": ["fuse"] + sum((["--view", v] for v in views), []) + ["--grid", "10", "-o", f"{out}/fuse.pxt"],
        "carve": ["carve"] + sum((["--mask", m] for m in masks), []) + ["--grid", "12", "-o", f"{out}/occ.pxt"],
        "genmesh": ["genmesh"] + sum((["--mask", m] for m in masks), []) + ["--grid", "12", "-o", f"{out}/gen.obj"],
        "voxelize": ["voxelize", "--mesh", f"{s}/gt.obj", "--camera", f"{s}/cam_0.json", "--grid", "12",
                     "-o", f"{out}/sdf.pxt"],
        "render-normals": ["render-normals", "--mesh", f"{s}/gt.obj", "--camera", f"{s}/cam_1.json",
                           "-o", f"{out}/n.pxt"],
        "render-depth": ["render-depth", "--mesh", f"{s}/gt.obj", "--camera", f"{s}/cam_1.json",
                         "-o", f"{out}/d.pxt"],
        "eval-normals": ["eval-normals", "--pred", f"{s}/normals_0.pxt", "--gt", f"{s}/normals_1.pxt",
                         "-o", f"{out}/en.json"],
        "eval-geo": ["eval-geo", "--pred", f"{s}/gt.obj", "--gt", f"{out}/gen.obj", "--samples", "300",
                     "--emd-samples", "64", "-o", f"{out}/eg.json"],
        "align-scene": ["align-scene", "--object", f"ball:{s}/gt.obj:{root}/vis.pxt", "--camera",
                        f"{s}/cam_0.json", "--pointmap", f"{s}/pointmap.pxt", "-o", f"{out}/scene.obj",
                        "--report", f"{out}/align.json"],
        "synth": ["synth", "--shape", "torus", "--views", "2", "--grid", "8", "--size", "24",
                  "-o", f"{out}/syn"],
        "mesh": ["mesh", "--sdf", f"{out}/sdf.pxt", "-o", f"{out}/mc.obj"],
    }


def snapshot(folder):
    return {p.relative_to(folder).as_posix(): p.read_bytes() for p in sorted(folder.rglob("*")) if p.is_file()}


def run_all(root, out, threads, seed=3):
    out.mkdir()
    for name, argv in commands(root, out).items():
        code = run(["--threads", str(threads), "--seed", str(seed)] + argv)
        assert code == 0, name
    return snapshot(out)


def test_every_subcommand_deterministic_across_threads(case, tmp_path):
    a = run_all(case, tmp_path / "t1", 1)
    b = run_all(case, tmp_path / "t8", 8)
    c = run_all(case, tmp_path / "again", 1)
    assert a.keys() == b.keys() and len(a) >= 14
    for key in a:
        assert a[key] == b[key], key
        assert a[key] == c[key], key


def test_subcommand_threads_flag(case, tmp_path):
    s = case / "s"
    argv = ["voxelize", "--mesh", f"{s}/gt.obj", "--fov", "40", "--grid", "8"]
    assert run(argv + ["--threads", "3", "-o", str(tmp_path / "a.pxt")]) == 0
    assert run(argv + ["-o", str(tmp_path / "b.pxt")]) == 0
    assert (tmp_path / "a.pxt").read_bytes() == (tmp_path / "b.pxt").read_bytes()


def test_place_fov_90(capsys):
    assert run(["place", "--fov", "90"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["placement"]["d"] == 0.0
    assert out["fx"] == pytest.approx(259.0, abs=1e-12)


def test_eval_geo_identical(case, tmp_path):
    gt = case / "s" / "gt.obj"
    assert run(["eval-geo", "--pred", str(gt), "--gt", str(gt), "--seed", "7", "--samples", "500",
                "-o", str(tmp_path / "r.json")]) == 0
    r = json.loads((tmp_path / "r.json").read_text())
    assert (r["cd"], r["emd"], r["fscore"]) == (0.0, 0.0, 100.0)
    assert r["conventions"]["tau"] == 0.02 and r["conventions"]["seed"] == 7


def test_eval_normals_identity_report(case, tmp_path):
    n = case / "s" / "normals_0.pxt"
    assert run(["eval-normals", "--pred", str(n), "--gt", str(n), "-o", str(tmp_path / "r.json")]) == 0
    r = json.loads((tmp_path / "r.json").read_text())
    assert r["iou"] == 100.0 and r["psnr"] == "inf" and r["mean"] == 0.0
    assert r["conventions"]["boundary_width"] == 5


def test_lift_volume_layout(case, tmp_path):
    s = case / "s"
    assert run(["lift", "--features", str(case / "f0a.pxt"), "--camera", f"{s}/cam_0.json",
                "--grid", "6", "-o", str(tmp_path / "v.pxt")]) == 0
    v = read_pxt(tmp_path / "v.pxt")
    assert v.shape == (6, 6, 6, 4) and v.dtype == np.float32
    side = json.loads((tmp_path / "v.pxt.json").read_text())
    assert side["R"] == 6


def test_synth_then_genmesh_within_bound(tmp_path):
    assert run(["synth", "--views", "6", "--grid", "32", "--size", "128", "--subdivisions", "3",
                "-o", str(tmp_path / "s")]) == 0
    s = tmp_path / "s"
    masks = sum((["--mask", f"{s}/mask_{k}.pxt:{s}/cam_{k}.json"] for k in range(6)), [])
    assert run(["genmesh"] + masks + ["--grid", "32", "-o", str(tmp_path / "g.obj")]) == 0
    assert run(["eval-geo", "--pred", str(tmp_path / "g.obj"), "--gt", str(s / "gt.obj"), "--samples", "3000",
                "--emd-samples", "128", "-o", str(tmp_path / "r.json")]) == 0
    r = json.loads((tmp_path / "r.json").read_text())
    pitch = 1.0 / 32
    # squared convention: each directed mean squared distance is at most pitch^2 when every point is within a pitch
    assert r["cd"] <= 2 * pitch**2
    assert read_obj(tmp_path / "g.obj").is_watertight()


@pytest.mark.parametrize(
    "argv",
    [
        ["place", "--fov", "90", "--bogus"],
        ["nosuchcommand"],
        ["place", "--fov", "200"],
        ["lift", "--features", "missing.pxt", "--camera", "missing.json", "-o", "OUT"],
        ["mesh", "--sdf", "missing.pxt", "-o", "OUT"],
    ],
)
def test_invalid_input_exit_2(argv, tmp_path, capsys):
    argv = [str(tmp_path / "out.bin") if a == "OUT" else a for a in argv]
    assert run(argv) == 2
    assert capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_corrupt_file_exit_2(case, tmp_path):
    bad = tmp_path / "bad.pxt"
    bad.write_bytes(encode_pxt(np.zeros((4, 4), dtype=np.float32))[:-2])
    out = tmp_path / "o.pxt"
    assert run(["lift", "--features", str(bad), "--camera", str(case / "s" / "cam_0.json"),
                "-o", str(out)]) == 2
    assert not out.exists()


def test_quad_obj_exit_2(tmp_path):
    (tmp_path / "q.obj").write_text("v 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\nf 1 2 3 4\n")
    assert run(["voxelize", "--mesh", str(tmp_path / "q.obj"), "--fov", "40", "--grid", "4",
                "-o", str(tmp_path / "o.pxt")]) == 2
    assert not (tmp_path / "o.pxt").exists()


def test_degenerate_alignment_exit_3(case, tmp_path):
    s = case / "s"
    pm = read_pxt(s / "pointmap.pxt").copy()
    pm[..., :3] *= -1  # points behind the camera: negative least-squares scale
    (tmp_path / "neg.pxt").write_bytes(encode_pxt(pm))
    out, rep = tmp_path / "scene.obj", tmp_path / "rep.json"
    code = run(["align-scene", "--object", f"ball:{s}/gt.obj:{case}/vis.pxt", "--camera", f"{s}/cam_0.json",
                "--pointmap", str(tmp_path / "neg.pxt"), "-o", str(out), "--report", str(rep)])
    assert code == 3
    assert not out.exists() and not rep.exists()


def test_insufficient_support_exit_3(case, tmp_path):
    s = case / "s"
    (tmp_path / "none.pxt").write_bytes(encode_pxt(np.zeros((40, 40), dtype=np.uint8)))
    code = run(["align-scene", "--object", f"ball:{s}/gt.obj:{tmp_path}/none.pxt", "--camera",
                f"{s}/cam_0.json", "--pointmap", f"{s}/pointmap.pxt", "-o", str(tmp_path / "o.obj"),
                "--report", str(tmp_path / "r.json")])
    assert code == 3
    assert sorted(p.name for p in tmp_path.iterdir()) == ["none.pxt"]


def test_version(capsys):
    assert run(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_failed_write_rolls_back(case, tmp_path):
    # the second output goes into a path blocked by a regular file
    (tmp_path / "blocker").write_text("x")
    s = case / "s"
    code = run(["align-scene", "--object", f"ball:{s}/gt.obj:{case}/vis.pxt", "--camera", f"{s}/cam_0.json",
                "--pointmap", f"{s}/pointmap.pxt", "-o", str(tmp_path / "scene.obj"),
                "--report", str(tmp_path / "blocker" / "r.json")])
    assert code == 2
    assert sorted(p.name for p in tmp_path.iterdir()) == ["blocker"]
