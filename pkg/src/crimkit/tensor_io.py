"""CRTF binary tensor container and named-tensor archives.

Layout (all little-endian):
  magic "CRTF" | version u16 | rank u16 | extents u32 * rank | payload f32 *

An archive is a sequence of entries, each a u32 name length, the UTF-8
name bytes, then one CRTF blob.
"""

from __future__ import annotations

import io
import struct

import numpy as np

MAGIC = b"CRTF"
VERSION = 1


class FormatError(ValueError):
    pass


def write_tensor(buf, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if arr.ndim > 4:
        raise FormatError(f"CRTF rank cap is 4, got {arr.ndim}")
    buf.write(MAGIC)
    buf.write(struct.pack("<HH", VERSION, arr.ndim))
    for e in arr.shape:
        buf.write(struct.pack("<I", e))
    buf.write(arr.tobytes())


def read_tensor(buf) -> np.ndarray:
    head = buf.read(8)
    if len(head) < 8 or head[:4] != MAGIC:
        raise FormatError("not a CRTF blob (bad magic)")
    version, rank = struct.unpack("<HH", head[4:])
    if version != VERSION:
        raise FormatError(f"unsupported CRTF version {version}")
    if rank > 4:
        raise FormatError(f"CRTF rank cap is 4, got {rank}")
    ext = struct.unpack(f"<{rank}I", buf.read(4 * rank)) if rank else ()
    count = int(np.prod(ext)) if ext else 1
    payload = buf.read(4 * count)
    if len(payload) != 4 * count:
        raise FormatError("truncated CRTF payload")
    return np.frombuffer(payload, dtype="<f4").reshape(ext).copy()


def save_archive(path, tensors: dict) -> None:
    """Write {name: array} as a named-tensor archive (insertion order kept)."""
    with open(path, "wb") as f:
        for name, arr in tensors.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            write_tensor(f, np.asarray(arr))


def load_archive(path) -> dict:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        data = f.read()
    buf = io.BytesIO(data)
    while True:
        head = buf.read(4)
        if not head:
            break
        if len(head) < 4:
            raise FormatError("truncated archive entry header")
        (nlen,) = struct.unpack("<I", head)
        name = buf.read(nlen).decode("utf-8")
        out[name] = read_tensor(buf)
    return out
