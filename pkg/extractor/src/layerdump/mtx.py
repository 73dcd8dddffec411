"""Minimal MTX1 writer/reader.

Byte layout (24-byte header, then row-major little-endian payload):
magic "MTX1", version u8 (1), dtype u8 (1=f32, 2=f64), ndim u8 (2),
reserved u8 (0), rows u64, cols u64.  Metadata lives in a JSON sidecar
at ``<path>.meta.json``.  This mirrors the consumer pipeline's container
format byte for byte; conformance is covered by cross-reading tests.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MTX1"
HEADER = struct.Struct("<4sBBBBQQ")
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def write_mtx(path, data, meta):
    """Write a 2-D float array plus its JSON sidecar."""
    data = np.asarray(data)
    if data.ndim != 2 or 0 in data.shape:
        raise ValueError(f"need a non-empty 2-D array, got {data.shape}")
    if not np.isfinite(data).all():
        raise ValueError("refusing to write non-finite values")
    code = 1 if data.dtype == np.float32 else 2
    dt = _DTYPES[code]
    path = Path(path)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, 1, code, 2, 0, *data.shape))
        f.write(np.ascontiguousarray(data, dtype=dt).tobytes())
    doc = {"dtype": "f4" if code == 1 else "f8",
           "rows": data.shape[0], "cols": data.shape[1], **meta}
    Path(str(path) + ".meta.json").write_text(json.dumps(doc, indent=1))


def read_mtx(path):
    """Read an MTX1 file; returns ``(array, meta)``."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise ValueError(f"{path}: shorter than the header")
    magic, version, code, ndim, _, rows, cols = HEADER.unpack(
        blob[:HEADER.size])
    if magic != MAGIC or version != 1 or ndim != 2 or code not in _DTYPES:
        raise ValueError(f"{path}: bad header")
    dt = _DTYPES[code]
    if len(blob) != HEADER.size + rows * cols * dt.itemsize:
        raise ValueError(f"{path}: payload length mismatch")
    data = np.frombuffer(blob[HEADER.size:], dtype=dt).reshape(rows, cols)
    sidecar = Path(str(path) + ".meta.json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return data, meta
