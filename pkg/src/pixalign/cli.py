"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or file format, 3 numeric or degenerate
failure. Data goes to the files named by ``-o``; diagnostics go to stderr.
Outputs are assembled in memory and written only once every step succeeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, evaluate, hullgen, io, lift, scene, synth
from .errors import InputError, NumericError
from .camera import fov_to_intrinsics
from .render import normal_map, render_depth
from .validation import check_views, resolve_placement
from .volume import SdfGrid, marching_cubes, voxelize_sdf

log = logging.getLogger("pixalign")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _common(parser, out=True):
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="PRNG seed")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    if out:
        parser.add_argument("-o", "--output", required=True, help="output path")


def _placement_args(parser):
    parser.add_argument("--grid", type=int, default=64, help="voxels per axis")
    parser.add_argument("--fov", type=float, default=None, help="auto-place the cube for this FoV (degrees)")
    parser.add_argument("--dist", type=float, default=None, help="explicit cube-center depth d")
    parser.add_argument("--scale", type=float, default=1.0, help="cube edge s")


def _placement(args, intr=None):
    return resolve_placement(args.grid, intr, args.fov, args.dist, args.scale)


def build_parser():
    p = _Parser(prog="pixalign", description="Pixel-aligned voxel lifting, carving and evaluation toolkit.")
    p.add_argument("--version", action="version", version=f"pixalign {__version__}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("place", help="auto-place the cube and print the implied camera")
    _common(s, out=False)
    s.add_argument("--fov", type=float, default=40.0)
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--size", type=int, default=518, help="square image size in pixels")
    s.add_argument("-o", "--output", default=None)

    s = sub.add_parser("lift", help="lift one view's feature pyramid into a volume")
    _common(s)
    s.add_argument("--features", required=True, help="comma-separated PXT feature maps (pyramid levels)")
    s.add_argument("--camera", required=True)
    s.add_argument("--mode", choices=("bilinear", "nearest"), default="bilinear")
    _placement_args(s)

    s = sub.add_parser("fuse", help="lift and average several views")
    _common(s)
    s.add_argument("--view", action="append", required=True, help="feats.pxt[,feats2.pxt...]:cam.json")
    s.add_argument("--reference", type=int, default=0)
    s.add_argument("--mode", choices=("bilinear", "nearest"), default="bilinear")
    _placement_args(s)

    for name in ("carve", "genmesh"):
        s = sub.add_parser(name, help="silhouette carving" if name == "carve" else "carve and mesh")
        _common(s)
        s.add_argument("--mask", action="append", required=True, help="mask.pxt:cam.json")
        s.add_argument("--reference", type=int, default=0)
        _placement_args(s)
        if name == "genmesh":
            s.add_argument("--smooth", type=int, default=1, help="SDF box-filter half width (0 = off)")

    s = sub.add_parser("voxelize", help="signed distance grid of a mesh")
    _common(s)
    s.add_argument("--mesh", required=True)
    s.add_argument("--camera", default=None, help="camera used for FoV-implied auto-placement")
    _placement_args(s)

    s = sub.add_parser("mesh", help="marching cubes on an SDF grid")
    _common(s)
    s.add_argument("--sdf", required=True)
    s.add_argument("--placement", default=None, help="placement JSON (defaults to the SDF sidecar)")
    s.add_argument("--iso", type=float, default=0.0)

    for name, what in (("render-normals", "camera-frame normal map"), ("render-depth", "z-depth map")):
        s = sub.add_parser(name, help=f"rasterise a mesh into a {what}")
        _common(s)
        s.add_argument("--mesh", required=True)
        s.add_argument("--camera", required=True)

    s = sub.add_parser("eval-normals", help="normal-map fidelity metrics")
    _common(s)
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--boundary", type=int, default=evaluate.BOUNDARY_WIDTH)

    s = sub.add_parser("eval-geo", help="CD / EMD / F-score between two meshes")
    _common(s)
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--samples", type=int, default=evaluate.DEFAULT_SAMPLES)
    s.add_argument("--tau", type=float, default=evaluate.DEFAULT_TAU)
    s.add_argument("--emd-samples", type=int, default=evaluate.EMD_CAP)

    s = sub.add_parser("align-scene", help="fit per-object scales to a point map and compose")
    _common(s)
    s.add_argument("--object", action="append", required=True, help="id:mesh.obj:mask.pxt")
    s.add_argument("--camera", required=True)
    s.add_argument("--pointmap", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--min-pixels", type=int, default=scene.MIN_PIXELS)
    s.add_argument("--trim", type=float, default=0.0, help="fraction of worst residuals dropped once")

    s = sub.add_parser("synth", help="write a synthetic test case into a directory")
    _common(s)
    s.add_argument("--shape", choices=synth.SHAPES, default="sphere")
    s.add_argument("--radius", type=float, default=0.3)
    s.add_argument("--half-extents", type=float, nargs=3, default=(0.25, 0.2, 0.15))
    s.add_argument("--major", type=float, default=0.28)
    s.add_argument("--minor", type=float, default=0.1)
    s.add_argument("--views", type=int, default=6)
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--fov", type=float, default=40.0)
    s.add_argument("--subdivisions", type=int, default=4)
    s.add_argument("--dist-jitter", type=float, default=0.0)
    s.add_argument("--fov-jitter", type=float, default=0.0)
    return p


# -- helpers -------------------------------------------------------------------

def _split_pair(item, what):
    if ":" not in item:
        raise InputError(f"{what} must look like 'data.pxt:cam.json', got {item!r}")
    a, b = item.rsplit(":", 1)
    return a, b


def _read_pyramid(paths, intr):
    levels = []
    for path in paths.split(","):
        a = io.read_pxt(path)
        if a.dtype != np.float32:
            raise InputError(f"feature map {path} must be float32")
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise InputError(f"feature map {path} must be H x W x C, got shape {a.shape}")
        levels.append(lift.FeatureMap(a))
    return lift.FeaturePyramid(tuple(levels), intr.width, intr.height)


def _read_mask(path, intr):
    a = io.read_pxt(path)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim != 2:
        raise InputError(f"mask {path} must be H x W, got shape {a.shape}")
    return a != 0


def _volume_out(args, vol, p):
    return [(args.output, io.encode_pxt(vol.to_dense())), (io.placement_sidecar(args.output), _placement_json(p))]


def _placement_json(p):
    return (json.dumps({"d": p.d, "s": p.s, "R": p.R}, indent=2) + "\n").encode()


# -- commands: each returns a list of (path, bytes) to write ----------------------

def cmd_place(args):
    p = resolve_placement(args.grid, None, args.fov, None, args.scale)
    intr = fov_to_intrinsics(args.fov, args.size, args.size)
    d = io.camera_to_dict(intr)
    d["placement"] = {"d": p.d, "s": p.s, "R": p.R}
    text = json.dumps(d, indent=2) + "\n"
    sys.stdout.write(text)
    return [(args.output, text.encode())] if args.output else []


def cmd_lift(args):
    intr, pose = io.read_camera(args.camera)
    view = lift.ViewInput(_read_pyramid(args.features, intr), intr, pose)
    p = _placement(args, intr)
    vol = lift.lift_single(view, p, mode=args.mode, threads=args.threads)
    return _volume_out(args, vol, p)


def cmd_fuse(args):
    views = []
    for item in args.view:
        feats, cam = _split_pair(item, "--view")
        intr, pose = io.read_camera(cam)
        views.append(lift.ViewInput(_read_pyramid(feats, intr), intr, pose))
    views = check_views(views, args.reference)
    p = _placement(args, views[args.reference].intrinsics)
    vol = lift.fuse_views(views, args.reference, p, mode=args.mode, threads=args.threads)
    return _volume_out(args, vol, p)


def _mask_views(args):
    views = []
    for item in args.mask:
        path, cam = _split_pair(item, "--mask")
        intr, pose = io.read_camera(cam)
        views.append(hullgen.MaskView(_read_mask(path, intr), intr, pose))
    return check_views(views, args.reference, "mask view")


def cmd_carve(args):
    views = _mask_views(args)
    p = _placement(args, views[args.reference].intrinsics)
    occ = hullgen.carve(views, args.reference, p)
    return [(args.output, io.encode_pxt(occ.bits)), (io.placement_sidecar(args.output), _placement_json(p))]


def cmd_genmesh(args):
    views = _mask_views(args)
    if args.smooth < 0:
        raise InputError("--smooth must be non-negative")
    p = _placement(args, views[args.reference].intrinsics)
    mesh = hullgen.generate_mesh(views, args.reference, p, args.smooth)
    return [(args.output, io.format_obj(mesh).encode())]


def cmd_voxelize(args):
    mesh = io.read_obj(args.mesh)
    intr = io.read_camera(args.camera)[0] if args.camera else None
    p = _placement(args, intr)
    grid = voxelize_sdf(mesh, p, threads=args.threads)
    return [(args.output, io.encode_pxt(grid.values)), (io.placement_sidecar(args.output), _placement_json(p))]


def cmd_mesh(args):
    vals = io.read_pxt(args.sdf)
    p = io.read_placement(args.placement or io.placement_sidecar(args.sdf))
    grid = SdfGrid(p, vals.astype(np.float64))
    return [(args.output, io.format_obj(marching_cubes(grid, args.iso)).encode())]


def cmd_render_normals(args):
    mesh = io.read_obj(args.mesh)
    intr, pose = io.read_camera(args.camera)
    return [(args.output, io.encode_pxt(normal_map(mesh, intr, pose)))]


def cmd_render_depth(args):
    mesh = io.read_obj(args.mesh)
    intr, pose = io.read_camera(args.camera)
    depth, valid = render_depth(mesh, intr, pose)
    return [(args.output, io.encode_pxt(np.stack([depth, valid.astype(np.float64)], axis=-1)))]


def _normal_file(path):
    a = io.read_pxt(path)
    if a.dtype != np.float32:
        raise InputError(f"normal map {path} must be float32")
    return evaluate.NormalMap.from_array(a)


def cmd_eval_normals(args):
    m = evaluate.normal_metrics(_normal_file(args.pred), _normal_file(args.gt), args.boundary)
    report = m.as_dict()
    report["conventions"] = {
        "boundary_width": args.boundary,
        "boundary_distance": "chebyshev",
        "angle_thresholds_deg": list(evaluate.ANGLE_THRESHOLDS),
        "region": "pixels valid in both maps",
        "psnr_ssim_encoding": "(n + 1) / 2, peak 1",
        "ssim_window": {"size": evaluate.SSIM_WINDOW, "sigma": evaluate.SSIM_SIGMA},
        "absent_fields": "null when the overlap (or boundary band) is empty",
    }
    return [(args.output, (io.dumps_report(report) + "\n").encode())]


def cmd_eval_geo(args):
    pred, gt = io.read_obj(args.pred), io.read_obj(args.gt)
    if args.samples < 1 or args.emd_samples < 1:
        raise InputError("sample counts must be positive")
    m = evaluate.geo_metrics(pred, gt, args.samples, args.tau, args.seed, args.emd_samples)
    report = m.as_dict()
    report["conventions"] = {
        "cd": evaluate.CD_CONVENTION,
        "emd": "exact optimal assignment, mean Euclidean distance",
        "fscore": "percent, nearest-neighbour distance <= tau",
        "tau": args.tau,
        "samples": args.samples,
        "emd_samples": min(args.samples, args.emd_samples),
        "seed": args.seed,
        "sampler": "xorshift64* seeded by splitmix64",
    }
    return [(args.output, (io.dumps_report(report) + "\n").encode())]


def cmd_align_scene(args):
    intr, _ = io.read_camera(args.camera)
    pm = scene.GlobalPointMap.from_array(io.read_pxt(args.pointmap))
    if pm.shape != (intr.height, intr.width):
        raise InputError("point map size does not match the camera")
    if not 0.0 <= args.trim < 1.0:
        raise InputError("--trim must lie in [0, 1)")
    objects = []
    for item in args.object:
        parts = item.rsplit(":", 2)
        if len(parts) != 3:
            raise InputError(f"--object must look like 'id:mesh.obj:mask.pxt', got {item!r}")
        oid, mpath, kpath = parts
        objects.append(scene.SceneObject(oid, io.read_obj(mpath), _read_mask(kpath, intr), intr))
    results = [scene.align_object(o, pm, args.min_pixels, args.trim) for o in objects]
    mesh, records = scene.compose_scene(objects, results)
    report = {
        "objects": [
            {"id": o.id, "alpha": r.alpha, "residual_rms": r.residual_rms, "pixel_count": r.pixel_count}
            for o, r in zip(objects, results)
        ],
        "conventions": {
            "model": "one scale per object about the camera origin, closed-form least squares",
            "constraint_pixels": "visibility mask AND point-map valid AND rendered depth valid",
            "min_pixels": args.min_pixels,
            "trim": args.trim,
        },
    }
    return [
        (args.output, io.format_obj(mesh).encode()),
        (args.report, (io.dumps_report(report) + "\n").encode()),
    ]


def cmd_synth(args):
    case = synth.SyntheticCase(
        shape=args.shape,
        radius=args.radius,
        half_extents=tuple(args.half_extents),
        major=args.major,
        minor=args.minor,
        views=args.views,
        fov=args.fov,
        size=args.size,
        grid=args.grid,
        seed=args.seed,
        subdivisions=args.subdivisions,
        dist_jitter=args.dist_jitter,
        fov_jitter=args.fov_jitter,
    )
    sc = synth.make_scene(case)
    out = Path(args.output)
    files = [(out / "gt.obj", io.format_obj(sc.mesh).encode())]
    for k, ((intr, pose), mask) in enumerate(zip(sc.cameras, sc.masks)):
        files.append((out / f"cam_{k}.json", (io.dumps_camera(intr, pose) + "\n").encode()))
        files.append((out / f"mask_{k}.pxt", io.encode_pxt(mask)))
        files.append((out / f"normals_{k}.pxt", io.encode_pxt(sc.normals[k])))
        files.append((out / f"depth_{k}.pxt", io.encode_pxt(sc.depths[k])))
    files.append((out / "pointmap.pxt", io.encode_pxt(sc.point_map)))
    p = sc.placement
    meta = {
        "case": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(case).items()},
        "placement": {"d": p.d, "s": p.s, "R": p.R},
        "reference": 0,
        "center": p.center.tolist(),
    }
    files.append((out / "case.json", (json.dumps(meta, indent=2) + "\n").encode()))
    return files


COMMANDS = {
    "place": cmd_place,
    "lift": cmd_lift,
    "fuse": cmd_fuse,
    "carve": cmd_carve,
    "genmesh": cmd_genmesh,
    "voxelize": cmd_voxelize,
    "mesh": cmd_mesh,
    "render-normals": cmd_render_normals,
    "render-depth": cmd_render_depth,
    "eval-normals": cmd_eval_normals,
    "eval-geo": cmd_eval_geo,
    "align-scene": cmd_align_scene,
    "synth": cmd_synth,
}


def _write_all(files):
    """Write every output, removing the ones already written if a later write fails."""
    done = []
    try:
        for path, data in files:
            path = Path(path)
            existed = path.exists()
            path.parent.mkdir(parents=True, exist_ok=True)
            io.write_bytes_atomic(path, data)
            if not existed:
                done.append(path)
    except OSError:
        for path in done:
            path.unlink(missing_ok=True)
        raise


def _fail(err, code):
    # straight to stderr: logging may be configured (or silenced) by a host process
    sys.stderr.write(f"pixalign: error: {err}\n")
    log.debug("failure", exc_info=err)
    return code


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise InputError("--threads must be at least 1")
        _write_all(COMMANDS[args.command](args))
    except SystemExit as e:  # --version / --help
        return int(e.code or 0)
    except NumericError as e:
        return _fail(e, EXIT_NUMERIC)
    except (InputError, OSError, ValueError) as e:
        return _fail(e, EXIT_INPUT)
    except (ArithmeticError, np.linalg.LinAlgError) as e:
        return _fail(e, EXIT_NUMERIC)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
