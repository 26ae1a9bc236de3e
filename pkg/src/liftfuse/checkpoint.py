"""Parameter checkpoint files.

Layout (all integers little-endian):

    b"PFCHKPT1"
    repeated until EOF, one record per parameter in sorted name order:
        u32   name length in bytes
        bytes UTF-8 name
        u32   ndim
        u64 x ndim   shape
        f64 x prod(shape)   values, row-major, little-endian
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, UsageError

MAGIC = b"PFCHKPT1"


def dumps_checkpoint(params: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise ConfigError("not a checkpoint file (bad magic)")
    out = {}
    pos = 8
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
            pos += 8 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
            pos += 8 * count
            out[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise ConfigError(f"truncated or corrupt checkpoint: {exc}") from exc
    return out


def save_checkpoint(path, params: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps_checkpoint(params))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"checkpoint {path} does not exist")
    return loads_checkpoint(path.read_bytes())
