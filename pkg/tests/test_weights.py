"""NFW1 weight container round trip and rejection paths."""

import struct

import numpy as np
import pytest

from nocsfit.diffcore import Parameter, load_weights, save_weights
from nocsfit.errors import FormatError, ShapeMismatch


def _params(rng):
    return [
        Parameter(rng.normal(size=(3, 4)), "featnet.enc.l1.w"),
        Parameter(rng.normal(size=(3, 1)), "featnet.enc.l1.b"),
        Parameter(rng.normal(size=(2, 3)), "recon.head.w"),
    ]


def test_roundtrip_bitwise(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "w.nfw"
    save_weights(path, params)
    fresh = [Parameter(np.zeros(p.shape), p.name) for p in params]
    load_weights(path, fresh)
    for a, b in zip(params, fresh):
        np.testing.assert_array_equal(a.value, b.value)


def test_bad_magic(tmp_path, rng):
    path = tmp_path / "w.nfw"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(FormatError):
        load_weights(path, _params(rng))


def test_unknown_identifier_rejected(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "w.nfw"
    save_weights(path, params)
    renamed = [Parameter(np.zeros(p.shape), p.name + ".v2") for p in params]
    with pytest.raises(FormatError):
        load_weights(path, renamed)


def test_shape_mismatch_rejected(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "w.nfw"
    save_weights(path, params)
    wrong = [Parameter(np.zeros((p.shape[0], p.shape[1] + 1)), p.name) for p in params]
    with pytest.raises(ShapeMismatch):
        load_weights(path, wrong)


def test_truncated_payload_rejected(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "w.nfw"
    save_weights(path, params)
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(FormatError):
        load_weights(path, _params(rng))


def test_missing_parameter_rejected(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "w.nfw"
    save_weights(path, params[:2])
    with pytest.raises(FormatError):
        load_weights(path, params)


def test_layout_is_little_endian_with_u32_headers(tmp_path):
    p = Parameter(np.array([[1.5, -2.0]]), "x")
    path = tmp_path / "w.nfw"
    save_weights(path, [p])
    blob = path.read_bytes()
    assert blob[:4] == b"NFW1"
    name_len = struct.unpack("<I", blob[4:8])[0]
    assert name_len == 1 and blob[8:9] == b"x"
    rows, cols = struct.unpack("<II", blob[9:17])
    assert (rows, cols) == (1, 2)
    np.testing.assert_array_equal(
        np.frombuffer(blob[17:], dtype="<f8"), [1.5, -2.0]
    )
