"""Checkpoint container: format framing and bit-exact round-trips."""

import struct

import numpy as np
import pytest

from weakdns.checkpoint import MAGIC, VERSION, load_tensors, save_tensors
from weakdns.errors import DataError


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "a.w": rng.normal(size=(3, 4)).astype(np.float32).astype(np.float64),
        "b/bias": rng.normal(size=7).astype(np.float32).astype(np.float64),
        "scalar": np.float32(3.25).astype(np.float64).reshape(()),
        "deep": rng.normal(size=(2, 3, 4, 5)).astype(np.float32).astype(np.float64),
    }
    path = tmp_path / "t.wdns"
    save_tensors(path, tensors)
    back = load_tensors(path)
    assert set(back) == set(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        np.testing.assert_array_equal(back[k], tensors[k])
    # writing the loaded dict again produces byte-identical files
    path2 = tmp_path / "t2.wdns"
    save_tensors(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_header_layout(tmp_path):
    path = tmp_path / "h.wdns"
    save_tensors(path, {"x": np.zeros((2, 2))})
    blob = path.read_bytes()
    assert blob[:4] == MAGIC
    assert struct.unpack_from("<I", blob, 4)[0] == VERSION
    (name_len,) = struct.unpack_from("<I", blob, 8)
    assert name_len == 1
    assert blob[12:13] == b"x"
    (rank,) = struct.unpack_from("<I", blob, 13)
    assert rank == 2
    assert struct.unpack_from("<2Q", blob, 17) == (2, 2)


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.wdns"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError, match="magic"):
        load_tensors(path)


def test_rejects_bad_version(tmp_path):
    path = tmp_path / "v.wdns"
    path.write_bytes(MAGIC + struct.pack("<I", 99))
    with pytest.raises(DataError, match="version"):
        load_tensors(path)


def test_rejects_truncated(tmp_path):
    path = tmp_path / "t.wdns"
    save_tensors(path, {"x": np.ones(10)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(DataError):
        load_tensors(path)


def test_missing_file():
    with pytest.raises(DataError):
        load_tensors("/nonexistent/x.wdns")
