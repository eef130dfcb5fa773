"""Tests for the LXLT binary tensor format."""

import struct

import numpy as np
import pytest

from radarcam import lxlt


def test_roundtrip_preserves_shape_and_values(tmp_path):
    rng = np.random.default_rng(3)
    arr = rng.normal(size=(2, 3, 4)).astype(np.float32).astype(np.float64)
    path = tmp_path / "t.lxlt"
    lxlt.write_tensor(path, arr)
    back = lxlt.read_tensor(path)
    assert back.shape == (2, 3, 4)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, arr)


def test_header_layout_is_exact(tmp_path):
    path = tmp_path / "t.lxlt"
    lxlt.write_tensor(path, np.array([[1.0, 2.0], [3.0, 4.0]]))
    blob = path.read_bytes()
    assert blob[:4] == b"LXLT"
    assert blob[4] == 1  # version
    assert blob[5] == 0  # float32 code
    assert blob[6] == 2  # rank
    assert struct.unpack("<2I", blob[7:15]) == (2, 2)
    assert struct.unpack("<4f", blob[15:]) == (1.0, 2.0, 3.0, 4.0)


def test_write_then_read_is_byte_stable(tmp_path):
    arr = np.linspace(-1, 1, 30).reshape(5, 6)
    a, b = tmp_path / "a.lxlt", tmp_path / "b.lxlt"
    lxlt.write_tensor(a, arr)
    lxlt.write_tensor(b, lxlt.read_tensor(a))
    assert a.read_bytes() == b.read_bytes()


def test_empty_first_dimension_is_allowed(tmp_path):
    path = tmp_path / "empty.lxlt"
    lxlt.write_tensor(path, np.zeros((0, 4)))
    back = lxlt.read_tensor(path)
    assert back.shape == (0, 4)


@pytest.mark.parametrize(
    "mutate,message",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + bytes([9]) + b[5:], "version"),
        (lambda b: b[:5] + bytes([7]) + b[6:], "dtype"),
        (lambda b: b[:-2], "truncated"),
        (lambda b: b + b"\x00\x00", "trailing"),
    ],
)
def test_malformed_files_are_rejected(tmp_path, mutate, message):
    path = tmp_path / "t.lxlt"
    lxlt.write_tensor(path, np.ones((2, 2)))
    bad = tmp_path / "bad.lxlt"
    bad.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(lxlt.TensorFormatError, match=message):
        lxlt.read_tensor(bad)


def test_non_finite_values_are_refused(tmp_path):
    with pytest.raises(lxlt.TensorFormatError):
        lxlt.write_tensor(tmp_path / "nan.lxlt", np.array([np.nan]))


def test_zero_rank_is_refused(tmp_path):
    with pytest.raises(lxlt.TensorFormatError):
        lxlt.write_tensor(tmp_path / "scalar.lxlt", np.float64(1.0))
