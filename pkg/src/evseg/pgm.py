"""Binary 8-bit PGM (P5) read/write."""

from __future__ import annotations

import numpy as np

from .errors import BadImageFile


def encode_pgm(raster: np.ndarray) -> bytes:
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ValueError(f"PGM needs a 2-D raster, got shape {raster.shape}")
    if raster.dtype != np.uint8:
        if raster.min(initial=0) < 0 or raster.max(initial=0) > 255:
            raise ValueError("PGM values must lie in 0..255")
        raster = raster.astype(np.uint8)
    h, w = raster.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(raster).tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise BadImageFile("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P5":
        raise BadImageFile(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise BadImageFile("non-integer PGM header field") from None
    if maxval != 255:
        raise BadImageFile(f"only 8-bit PGM supported, maxval={maxval}")
    body = data[pos:]
    if len(body) != w * h:
        raise BadImageFile(f"expected {w * h} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, raster: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(raster))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())
