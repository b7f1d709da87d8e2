"""CRTF container: byte layout, round trips, corruption handling."""

import io
import struct

import numpy as np
import pytest

from crimkit import tensor_io as tio


def test_roundtrip_various_ranks(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "scalar_row": rng.standard_normal((1,)).astype(np.float32),
        "mat": rng.standard_normal((3, 4)).astype(np.float32),
        "img": rng.standard_normal((3, 8, 8)).astype(np.float32),
        "batch": rng.standard_normal((2, 3, 4, 4)).astype(np.float32),
    }
    p = tmp_path / "a.crtf"
    tio.save_archive(p, tensors)
    back = tio.load_archive(p)
    assert list(back) == list(tensors)  # insertion order preserved
    for k in tensors:
        assert back[k].dtype == np.float32
        assert np.array_equal(back[k], tensors[k])


def test_blob_byte_layout():
    buf = io.BytesIO()
    arr = np.array([[1.0, 2.0]], dtype=np.float32)
    tio.write_tensor(buf, arr)
    raw = buf.getvalue()
    assert raw[:4] == b"CRTF"
    version, rank = struct.unpack("<HH", raw[4:8])
    assert version == 1 and rank == 2
    assert struct.unpack("<II", raw[8:16]) == (1, 2)
    assert np.frombuffer(raw[16:], dtype="<f4").tolist() == [1.0, 2.0]


def test_bad_magic_rejected():
    with pytest.raises(tio.FormatError):
        tio.read_tensor(io.BytesIO(b"NOPE" + b"\x00" * 16))


def test_truncated_payload_rejected():
    buf = io.BytesIO()
    tio.write_tensor(buf, np.ones((4, 4), dtype=np.float32))
    clipped = io.BytesIO(buf.getvalue()[:-8])
    with pytest.raises(tio.FormatError):
        tio.read_tensor(clipped)


def test_unicode_names(tmp_path):
    p = tmp_path / "n.crtf"
    tio.save_archive(p, {"enc.0.wéight": np.zeros((2,), dtype=np.float32)})
    assert "enc.0.wéight" in tio.load_archive(p)
