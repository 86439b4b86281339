"""Binary netpbm IO: PGM (P5) for class grids, PPM (P6) for RGB images.

Both formats are written with maxval 255 and no comment lines, so any
file produced here round-trips bit-exactly.
"""

from __future__ import annotations

import numpy as np


class MalformedHeader(ValueError):
    """Raised when a netpbm header cannot be parsed or is unsupported."""


def _read_header(data: bytes, magic: bytes):
    if not data.startswith(magic):
        raise MalformedHeader(f"expected {magic!r} file, got {data[:2]!r}")
    # Header tokens are separated by whitespace; '#' starts a comment line.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise MalformedHeader("truncated header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise MalformedHeader(f"non-numeric header token {token!r}")
        fields.append(int(token))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1  # single whitespace byte separates header from raster
    width, height, maxval = fields
    if maxval != 255:
        raise MalformedHeader(f"only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    return width, height, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5, maxval 255) into a (H, W) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, pos = _read_header(data, b"P5")
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise MalformedHeader("raster shorter than header promises")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, grid: np.ndarray) -> None:
    """Write a (H, W) uint8 array as binary PGM (P5, maxval 255)."""
    grid = np.ascontiguousarray(grid, dtype=np.uint8)
    if grid.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {grid.shape}")
    height, width = grid.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(grid.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6, maxval 255) into a (H, W, 3) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, pos = _read_header(data, b"P6")
    raster = data[pos : pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise MalformedHeader("raster shorter than header promises")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, image: np.ndarray) -> None:
    """Write a (H, W, 3) uint8 array as binary PPM (P6, maxval 255)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3), got shape {image.shape}")
    height, width, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (width, height))
        fh.write(image.tobytes())


def float_to_byte(image: np.ndarray) -> np.ndarray:
    """Quantize a float image in [0, 1] to uint8 with round-half-away behavior."""
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def byte_to_float(image: np.ndarray) -> np.ndarray:
    """Map uint8 pixels to floats in [0, 1]."""
    return np.asarray(image, dtype=np.float64) / 255.0
