"""Binary checkpoint container.

Layout (little-endian)::

    b"DTGN" | version u32 | entry count u32
    per entry: name length u16 | name utf-8 | rank u8 | dims u32 * rank | float32 payload
    optional trailer: b"META" | length u32 | utf-8 JSON (sorted keys)

Arrays round-trip bit-exactly; non-float32 arrays are stored as float32.
"""

from __future__ import annotations

import io
import json
import os
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from ..errors import DTGNError

MAGIC = b"DTGN"
META = b"META"
VERSION = 1


class CheckpointFormatError(DTGNError):
    pass


def dumps(arrays: Mapping[str, np.ndarray], meta: Mapping | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if meta is not None:
        blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        buf.write(META)
        buf.write(struct.pack("<I", len(blob)))
        buf.write(blob)
    return buf.getvalue()


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise CheckpointFormatError("bad magic, not a DTGN checkpoint")
    version, count = struct.unpack_from("<II", view, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    pos = 12
    arrays: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", view, pos)
            pos += 2
            name = bytes(view[pos:pos + nlen]).decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", view, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", view, pos)
            pos += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(view, dtype="<f4", count=n, offset=pos).astype(np.float32).reshape(dims)
            pos += 4 * n
            arrays[name] = arr
    except (struct.error, ValueError) as exc:
        raise CheckpointFormatError(f"truncated checkpoint: {exc}") from None
    meta: dict = {}
    if pos < len(blob):
        if bytes(view[pos:pos + 4]) != META:
            raise CheckpointFormatError("trailing bytes after entries")
        (mlen,) = struct.unpack_from("<I", view, pos + 4)
        meta = json.loads(bytes(view[pos + 8:pos + 8 + mlen]).decode("utf-8"))
    return arrays, meta


def save(path: str | os.PathLike, arrays: Mapping[str, np.ndarray], meta: Mapping | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(arrays, meta))
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
