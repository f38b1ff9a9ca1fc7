"""File formats: PXT tensor container, OBJ triangle meshes, camera and placement JSON.

PXT layout (all integers little-endian)::

    bytes 0-3   magic b"PXT1"
    byte  4     dtype code: 1 = float32, 2 = uint8
    byte  5     ndim
    bytes 6-7   reserved, zero
    8 * ndim    dims as uint64
    payload     row-major, last dim fastest
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, Pose
from .errors import FormatError, InputError
from .placement import CubePlacement
from .volume import TriMesh

MAGIC = b"PXT1"
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("u1")}
CODES = {np.dtype("<f4"): 1, np.dtype("u1"): 2}


def encode_pxt(array):
    """Serialise a tensor; booleans become uint8 and other floats are cast to float32."""
    a = np.asarray(array)
    if a.dtype == np.bool_ or a.dtype == np.uint8:
        dt = np.dtype("u1")
    elif a.dtype.kind == "f":
        dt = np.dtype("<f4")
    else:
        raise FormatError(f"PXT supports float32 and uint8 tensors, got {a.dtype}")
    if a.ndim > 255:
        raise FormatError("too many dimensions for PXT")
    head = MAGIC + struct.pack("<BBH", CODES[dt], a.ndim, 0)
    head += struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + np.ascontiguousarray(a, dtype=dt).tobytes()


def decode_pxt(buf):
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("not a PXT file (bad magic)")
    code, ndim, reserved = struct.unpack_from("<BBH", buf, 4)
    if code not in DTYPES:
        raise FormatError(f"unknown PXT dtype code {code}")
    if reserved != 0:
        raise FormatError("PXT reserved bytes must be zero")
    head = 8 + 8 * ndim
    if len(buf) < head:
        raise FormatError("truncated PXT header")
    dims = struct.unpack_from(f"<{ndim}Q", buf, 8)
    dt = DTYPES[code]
    count = int(np.prod(dims, dtype=object)) if dims else 1
    need = head + count * dt.itemsize
    if len(buf) != need:
        raise FormatError(f"PXT payload size mismatch: expected {need} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype=dt, count=count, offset=head).reshape(dims).copy()


def read_pxt(path):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    return decode_pxt(data)


def write_bytes_atomic(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pxt(path, array):
    write_bytes_atomic(path, encode_pxt(array))


# -- OBJ ----------------------------------------------------------------------

def parse_obj(text):
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                if len(parts) < 4:
                    raise FormatError(f"line {lineno}: vertex needs three coordinates")
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                if len(parts) != 4:
                    raise FormatError(
                        f"line {lineno}: only triangles are supported, face has {len(parts) - 1} vertices"
                    )
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if any(i <= 0 for i in idx):
                    raise FormatError(f"line {lineno}: face indices must be positive (1-based)")
                faces.append([i - 1 for i in idx])
        except ValueError as e:
            raise FormatError(f"line {lineno}: {e}") from e
    try:
        return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
    except InputError as e:
        raise FormatError(str(e)) from e


def format_obj(mesh):
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def read_obj(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    return parse_obj(text)


def write_obj(path, mesh):
    write_bytes_atomic(path, format_obj(mesh).encode())


# -- JSON descriptors ---------------------------------------------------------

def camera_to_dict(intr, pose=None):
    d = {
        "fx": intr.fx,
        "fy": intr.fy,
        "cx": intr.cx,
        "cy": intr.cy,
        "width": intr.width,
        "height": intr.height,
    }
    if pose is not None:
        d["world_from_camera"] = [float(x) for x in pose.matrix().reshape(-1)]
    return d


def camera_from_dict(d):
    try:
        intr = CameraIntrinsics(
            float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), d["width"], d["height"]
        )
        m = d.get("world_from_camera")
        if m is None:
            pose = Pose.identity()
        else:
            if len(m) != 16:
                raise InputError("world_from_camera must hold 16 numbers")
            pose = Pose.from_matrix(np.array(m, dtype=np.float64))
    except KeyError as e:
        raise FormatError(f"camera descriptor lacks key {e}") from e
    except (TypeError, ValueError) as e:
        raise FormatError(f"bad camera descriptor: {e}") from e
    return intr, pose


def dumps_camera(intr, pose=None):
    return json.dumps(camera_to_dict(intr, pose), indent=2)


def loads_camera(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"camera descriptor is not valid JSON: {e}") from e
    if not isinstance(d, dict):
        raise FormatError("camera descriptor must be a JSON object")
    return camera_from_dict(d)


def read_camera(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    return loads_camera(text)


def write_camera(path, intr, pose=None):
    write_bytes_atomic(path, (dumps_camera(intr, pose) + "\n").encode())


def placement_sidecar(path):
    return Path(str(path) + ".json")


def write_placement(path, p):
    write_bytes_atomic(path, (json.dumps({"d": p.d, "s": p.s, "R": p.R}, indent=2) + "\n").encode())


def read_placement(path):
    try:
        d = json.loads(Path(path).read_text())
        return CubePlacement(float(d["d"]), float(d["s"]), int(d["R"]))
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad placement sidecar {path}: {e}") from e


def dumps_report(report):
    """JSON with infinities written as the strings ``"inf"`` / ``"-inf"``."""

    def fix(x):
        if isinstance(x, float) and x != x:
            return "nan"
        if isinstance(x, float) and x in (float("inf"), float("-inf")):
            return "inf" if x > 0 else "-inf"
        if isinstance(x, dict):
            return {k: fix(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [fix(v) for v in x]
        return x

    return json.dumps(fix(report), indent=2, sort_keys=True, allow_nan=False)
