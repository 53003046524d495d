"""Tiny binary PGM (P5) codec for single-channel uint8 label masks."""
from __future__ import annotations

from orion.errors import OrionError

MAX_SIDE = 8192


class RasterError(OrionError):
    pass


def write_pgm(width: int, height: int, pixels: bytes) -> bytes:
    if not 0 < width <= MAX_SIDE or not 0 < height <= MAX_SIDE:
        raise RasterError(f"bad dimensions {width}x{height}")
    if len(pixels) != width * height:
        raise RasterError(f"expected {width * height} bytes, got {len(pixels)}")
    return b"P5\n%d %d\n255\n" % (width, height) + pixels


def read_pgm(data: bytes) -> tuple[int, int, bytes]:
    """Returns (width, height, row-major pixels). Only the subset write_pgm
    emits: single whitespace tokens, maxval 255, no comments."""
    if not data.startswith(b"P5"):
        raise RasterError("not a P5 stream")
    parts = data.split(b"\n", 3)
    if len(parts) != 4:
        raise RasterError("truncated header")
    dims = parts[1].split()
    if len(dims) != 2 or parts[2] != b"255":
        raise RasterError("unsupported header")
    width, height = int(dims[0]), int(dims[1])
    pixels = parts[3]
    if len(pixels) != width * height:
        raise RasterError(f"expected {width * height} bytes, got {len(pixels)}")
    return width, height, pixels


def fill_rect(
    pixels: bytearray, width: int, height: int, bbox_px: tuple[int, int, int, int], label: int
) -> None:
    """Paint [x0, x1) x [y0, y1) with a label, clamped to the canvas."""
    x0, y0, x1, y1 = bbox_px
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(width, x1), min(height, y1)
    for y in range(y0, y1):
        row = y * width
        for x in range(x0, x1):
            pixels[row + x] = label


def px_bounds(bbox: tuple[float, float, float, float], width: int, height: int) -> tuple[int, int, int, int]:
    """Half-open pixel bounds from a normalized box, round-half-up at each edge."""
    x, y, w, h = bbox
    def r(v: float) -> int:
        return int(v + 0.5)
    return r(x * width), r(y * height), r((x + w) * width), r((y + h) * height)
