"""Strict binary PGM (P5, maxval 255) reader/writer.

The wire contract: magic "P5", whitespace-separated width/height/255 header,
one whitespace byte, then exactly width*height raster bytes. Violations are
reported with the byte offset where parsing stopped.
"""

from __future__ import annotations

import numpy as np

_WS = b" \t\r\n\v\f"


class PgmError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(buf) and buf[pos:pos + 1] in _WS:
        pos += 1
    start = pos
    while pos < len(buf) and buf[pos:pos + 1] not in _WS:
        pos += 1
    if start == pos:
        raise PgmError("unexpected end of header", start)
    return buf[start:pos], pos


def parse_pgm(buf: bytes) -> np.ndarray:
    """Decode a P5 buffer to float32 pixels in [0, 1], shape (height, width)."""
    if buf[:2] != b"P5":
        raise PgmError(f"expected magic 'P5', found {buf[:2]!r}", 0)
    pos = 2
    dims = []
    for _ in range(3):
        token, pos = _next_token(buf, pos)
        if not token.isdigit():
            raise PgmError(f"expected decimal header field, found {token!r}",
                           pos - len(token))
        dims.append(int(token))
    width, height, maxval = dims
    if width <= 0 or height <= 0:
        raise PgmError(f"non-positive dimensions {width}x{height}", 2)
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval}, only 255", pos - len(str(maxval)))
    if pos >= len(buf) or buf[pos:pos + 1] not in _WS:
        raise PgmError("expected single whitespace before raster", pos)
    pos += 1
    need = width * height
    raster = buf[pos:]
    if len(raster) < need:
        raise PgmError(f"raster needs {need} bytes, found {len(raster)}", pos)
    if len(raster) > need:
        raise PgmError(f"{len(raster) - need} trailing bytes after raster", pos + need)
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return pixels.astype(np.float32) / np.float32(255.0)


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return parse_pgm(f.read())


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encode [0, 1] floats (or uint8) to a P5 buffer; floats round to nearest."""
    if pixels.ndim != 2:
        raise ValueError(f"PGM needs a 2-d array, got shape {pixels.shape}")
    if pixels.dtype == np.uint8:
        raw = pixels
    else:
        raw = np.clip(np.rint(np.asarray(pixels, dtype=np.float64) * 255.0),
                      0, 255).astype(np.uint8)
    h, w = raw.shape
    return b"P5\n%d %d\n255\n" % (w, h) + raw.tobytes()


def write_pgm(path, pixels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(pixels))
