"""OFX1 field file format.

Layout (all little-endian):
  bytes 0..7    magic ``b"OFX1FLD\\0"``
  bytes 8..11   u32 format version (currently 1)
  bytes 12..15  u32 reserved (zero)
  u32           geometry tag: 0 = periodic3, 1 = channel
  u32[3]        dims N1, N2, N3
  f64[3]        domain lengths L1, L2, L3
  f64[...]      three contiguous component arrays, each N1*N2*N3 samples in
                x-fastest order (index i of axis 1 varies fastest)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .fields import CHANNEL, PERIODIC, GridField

MAGIC = b"OFX1FLD\0"
VERSION = 1

_GEOMETRY_TAGS = {PERIODIC: 0, CHANNEL: 1}
_TAG_GEOMETRIES = {v: k for k, v in _GEOMETRY_TAGS.items()}


def write_field(path, f: GridField) -> None:
    path = Path(path)
    n1, n2, n3 = f.dims
    header = MAGIC + struct.pack("<II", VERSION, 0)
    header += struct.pack("<I", _GEOMETRY_TAGS[f.geometry])
    header += struct.pack("<III", n1, n2, n3)
    header += struct.pack("<ddd", *f.lengths)
    with open(path, "wb") as fh:
        fh.write(header)
        for c in range(3):
            # ravel order='F' puts the first axis (x) fastest
            fh.write(np.asarray(f.data[c], dtype="<f8").ravel(order="F").tobytes())


def read_field(path) -> GridField:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 44 or raw[:8] != MAGIC:
        raise ValueError(f"{path}: not an OFX1 field file")
    version, _reserved = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported OFX1 version {version}")
    tag, = struct.unpack_from("<I", raw, 16)
    if tag not in _TAG_GEOMETRIES:
        raise ValueError(f"{path}: unknown geometry tag {tag}")
    n1, n2, n3 = struct.unpack_from("<III", raw, 20)
    lengths = struct.unpack_from("<ddd", raw, 32)
    count = n1 * n2 * n3
    expected = 56 + 3 * 8 * count
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated file ({len(raw)} bytes, expected {expected})")
    data = np.empty((3, n1, n2, n3))
    offset = 56
    for c in range(3):
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        data[c] = flat.reshape((n1, n2, n3), order="F")
        offset += 8 * count
    return GridField(data, lengths, _TAG_GEOMETRIES[tag])
