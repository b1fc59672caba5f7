"""Binary 8-bit PGM (P5) frames."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..errors import MalformedPGMError

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def read_pgm(path: str | Path) -> np.ndarray:
    """Return the frame as float32 scaled to [0, 1]."""
    blob = Path(path).read_bytes()
    fields = []
    pos = 0
    for _ in range(4):
        m = _TOKEN.match(blob, pos)
        if m is None:
            raise MalformedPGMError(f"{path}: truncated header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise MalformedPGMError(f"{path}: expected magic P5, got {fields[0][:8]!r}")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise MalformedPGMError(f"{path}: non-numeric header field") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 256:
        raise MalformedPGMError(f"{path}: unsupported geometry {width}x{height} maxval {maxval}")
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise MalformedPGMError(f"{path}: missing whitespace after header")
    pixels = blob[pos + 1:]
    if len(pixels) < width * height:
        raise MalformedPGMError(f"{path}: {len(pixels)} pixel bytes, expected {width * height}")
    data = np.frombuffer(pixels, dtype=np.uint8, count=width * height).reshape(height, width)
    return data.astype(np.float32) / np.float32(maxval)


def write_pgm(path: str | Path, frame: np.ndarray) -> None:
    frame = np.asarray(frame)
    pixels = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes())
