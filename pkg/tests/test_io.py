import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pixalign.camera import CameraIntrinsics, fov_to_intrinsics
from pixalign.errors import FormatError, InputError
from pixalign.io import (
    decode_pxt,
    dumps_camera,
    dumps_report,
    encode_pxt,
    format_obj,
    loads_camera,
    parse_obj,
    read_placement,
    read_pxt,
    write_placement,
    write_pxt,
)
from pixalign.placement import CubePlacement
from pixalign.synth import icosphere
from test_camera import random_pose

shapes = hnp.array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=5)


@settings(max_examples=60, deadline=None)
@given(a=hnp.arrays(np.dtype("<f4"), shapes, elements=st.floats(width=32, allow_nan=True)))
def test_pxt_f32_round_trip_bitwise(a):
    back = decode_pxt(encode_pxt(a))
    assert back.dtype == np.float32 and back.shape == a.shape
    assert back.tobytes() == a.tobytes()


@settings(max_examples=40, deadline=None)
@given(a=hnp.arrays(np.uint8, shapes))
def test_pxt_u8_round_trip_bitwise(a):
    back = decode_pxt(encode_pxt(a))
    assert back.dtype == np.uint8 and back.shape == a.shape
    assert back.tobytes() == a.tobytes()


def test_pxt_header_layout():
    buf = encode_pxt(np.zeros((2, 3), dtype=np.float32))
    assert buf[:4] == b"PXT1"
    assert buf[4:8] == bytes([1, 2, 0, 0])
    assert struct.unpack("<2Q", buf[8:24]) == (2, 3)
    assert len(buf) == 24 + 6 * 4


def test_pxt_little_endian_payload():
    buf = encode_pxt(np.array([1.0], dtype=np.float32))
    assert buf[-4:] == struct.pack("<f", 1.0)


def test_pxt_zero_length_dims():
    for shape in [(0,), (3, 0), (0, 4, 2)]:
        a = np.zeros(shape, dtype=np.float32)
        back = decode_pxt(encode_pxt(a))
        assert back.shape == shape


def test_pxt_bool_becomes_u8():
    back = decode_pxt(encode_pxt(np.array([[True, False]])))
    assert back.dtype == np.uint8
    np.testing.assert_array_equal(back, [[1, 0]])


def test_pxt_rejects_bad_input():
    good = encode_pxt(np.arange(6, dtype=np.float32).reshape(2, 3))
    with pytest.raises(FormatError):
        decode_pxt(good[:-1])  # truncated payload
    with pytest.raises(FormatError):
        decode_pxt(good[:12])  # truncated header
    with pytest.raises(FormatError):
        decode_pxt(good + b"\0")  # trailing bytes
    with pytest.raises(FormatError):
        decode_pxt(b"PXT2" + good[4:])
    with pytest.raises(FormatError):
        decode_pxt(good[:4] + bytes([3]) + good[5:])  # unknown dtype
    with pytest.raises(FormatError):
        decode_pxt(good[:6] + b"\x01\x00" + good[8:])  # reserved bytes set
    with pytest.raises(FormatError):
        encode_pxt(np.zeros(3, dtype=np.int32))


def test_pxt_file_io(tmp_path):
    a = np.random.default_rng(0).normal(size=(4, 5, 2)).astype(np.float32)
    write_pxt(tmp_path / "a.pxt", a)
    assert read_pxt(tmp_path / "a.pxt").tobytes() == a.tobytes()
    assert [p.name for p in tmp_path.iterdir()] == ["a.pxt"]
    with pytest.raises(InputError):
        read_pxt(tmp_path / "missing.pxt")


# -- OBJ ----------------------------------------------------------------------

def test_obj_round_trip_exact():
    m = icosphere(0.3, 2, (0.1, -0.2, 1.3))
    back = parse_obj(format_obj(m))
    assert back.vertices.tobytes() == m.vertices.tobytes()
    np.testing.assert_array_equal(back.triangles, m.triangles)


def test_obj_ignores_other_records():
    text = "# comment\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nvt 0 0\nf 1/1/1 2/2/1 3/3/1\ng grp\n"
    m = parse_obj(text)
    assert len(m.vertices) == 3 and m.triangles.tolist() == [[0, 1, 2]]


def test_obj_rejects_quads_and_bad_indices():
    with pytest.raises(FormatError, match="triangles"):
        parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(FormatError):
        parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1 2 4\n")
    with pytest.raises(FormatError):
        parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nf 0 1 2\n")
    with pytest.raises(FormatError):
        parse_obj("v 0 0\n")
    with pytest.raises(FormatError):
        parse_obj("v 0 0 x\n")


# -- camera / placement JSON ------------------------------------------------------

def test_camera_json_round_trip_bitwise():
    rng = np.random.default_rng(1)
    for _ in range(10):
        intr = CameraIntrinsics(*rng.uniform(10, 900, size=2), *rng.uniform(0, 64, size=2), 64, 48)
        pose = random_pose(rng)
        intr2, pose2 = loads_camera(dumps_camera(intr, pose))
        assert (intr2.fx, intr2.fy, intr2.cx, intr2.cy) == (intr.fx, intr.fy, intr.cx, intr.cy)
        assert (intr2.width, intr2.height) == (64, 48)
        assert pose2.matrix().tobytes() == pose.matrix().tobytes()


def test_camera_json_defaults_to_identity():
    intr, pose = loads_camera(dumps_camera(fov_to_intrinsics(40, 8, 8)))
    np.testing.assert_array_equal(pose.matrix(), np.eye(4))


def test_camera_json_errors():
    with pytest.raises(FormatError):
        loads_camera("{")
    with pytest.raises(FormatError):
        loads_camera("[]")
    with pytest.raises(FormatError):
        loads_camera(json.dumps({"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 4}))
    with pytest.raises(InputError):
        loads_camera(json.dumps({"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 4, "height": 4,
                                 "world_from_camera": [1, 0, 0]}))


def test_placement_sidecar(tmp_path):
    p = CubePlacement(0.873738709727311, 1.25, 48)
    write_placement(tmp_path / "p.json", p)
    q = read_placement(tmp_path / "p.json")
    assert (q.d, q.s, q.R) == (p.d, p.s, p.R)
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(FormatError):
        read_placement(tmp_path / "bad.json")


def test_report_writes_infinity_as_string():
    out = json.loads(dumps_report({"psnr": float("inf"), "x": [float("-inf"), 1.0], "y": None}))
    assert out == {"psnr": "inf", "x": ["-inf", 1.0], "y": None}
