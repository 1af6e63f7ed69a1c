"""Binary container of named float64 matrices.

Layout (all integers little-endian)::

    b"GMFCKPT"  magic (7 bytes)
    u8          version (1)
    u32         record count
    repeated:   u32 name length, UTF-8 name, u32 rows, u32 cols,
                rows*cols float64 little-endian values (row-major)
"""
from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ContractError

MAGIC = b"GMFCKPT"
VERSION = 1


def dumps(matrices: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<BI", VERSION, len(matrices))]
    for name, m in matrices.items():
        m = np.asarray(m, dtype=np.float64)
        if m.ndim == 1:
            m = m.reshape(1, -1)
        if m.ndim != 2:
            raise ContractError(f"checkpoint entry {name!r} is not 2-D: {m.shape}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<II", *m.shape))
        parts.append(np.ascontiguousarray(m).astype("<f8").tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:len(MAGIC)] != MAGIC:
        raise ContractError("not a gmflab checkpoint (bad magic)")
    pos = len(MAGIC)
    version, count = struct.unpack_from("<BI", blob, pos)
    if version != VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    pos += 5
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        rows, cols = struct.unpack_from("<II", blob, pos)
        pos += 8
        size = rows * cols * 8
        out[name] = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).astype(np.float64)
        pos += size
    if pos != len(blob):
        raise ContractError("trailing bytes after last checkpoint record")
    return out


def save(path, matrices: Mapping[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(matrices))
    os.replace(tmp, path)


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
