"""Bit-exact file formats: binary PGM images and planar float32 maps.

Two formats cover everything the pipeline reads or writes:

* PGM ``P5``: ``P5\\n<width> <height>\\n255\\n`` followed by ``width*height``
  raster bytes.  Used for grayscale images, binary masks (values 0/255),
  and rendered maps.
* FPLANES: one ASCII header line ``FPLANES <planes> <width> <height>``
  followed by ``planes*height*width`` little-endian float32 values,
  plane-major, row-major within each plane.  Used for probability maps,
  superpixel label maps, and per-region vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, UnsupportedDepthError

PROB_CLASSES = 4
SUM_TOL = 1e-4
VALUE_TOL = 1e-6


@dataclass(frozen=True)
class Image:
    """8-bit grayscale image, row-major."""

    pixels: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 2 or px.dtype != np.uint8:
            raise ContractError("image pixels must be a 2-D uint8 array")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ContractError("image must have positive dimensions")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _next_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Return (token, token_start, next_pos), skipping whitespace and comments."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            while pos < n and data[pos : pos + 1] not in b"\r\n":
                pos += 1
        else:
            break
    if pos >= n:
        raise FormatError(f"unexpected end of header at byte {pos}")
    start = pos
    while pos < n and data[pos : pos + 1] not in b" \t\r\n":
        pos += 1
    return data[start:pos], start, pos


def _int_token(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, start, pos = _next_token(data, pos)
    try:
        value = int(token)
    except ValueError:
        raise FormatError(
            f"expected integer {what} at byte {start}, found {token!r}"
        ) from None
    return value, pos


def load_image(path) -> Image:
    """Decode a binary PGM (magic P5, maxval 255)."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError(
            f"{path}: expected magic 'P5' at byte 0, found {data[:2]!r}"
        )
    width, pos = _int_token(data, 2, "width")
    height, pos = _int_token(data, pos, "height")
    maxval, pos = _int_token(data, pos, "maxval")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedDepthError(f"{path}: maxval {maxval} unsupported, need 255")
    if pos >= len(data) or data[pos : pos + 1] not in b" \t\r\n":
        raise FormatError(f"{path}: expected whitespace after maxval at byte {pos}")
    pos += 1
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise FormatError(
            f"{path}: raster truncated at byte {pos + len(raster)}, "
            f"need {need} bytes from byte {pos}"
        )
    if pos + need != len(data):
        raise FormatError(f"{path}: trailing data at byte {pos + need}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    return Image(pixels)


def save_image(path, image: Image | np.ndarray) -> None:
    """Write a binary PGM with the canonical header."""
    px = image.pixels if isinstance(image, Image) else np.asarray(image)
    if px.ndim != 2:
        raise ContractError("can only save 2-D arrays as PGM")
    px = px.astype(np.uint8, copy=False)
    h, w = px.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + px.tobytes())


def load_mask(path) -> np.ndarray:
    """Load a binary mask stored as PGM with values {0, 255}; returns uint8 {0, 1}."""
    img = load_image(path)
    px = img.pixels
    bad = (px != 0) & (px != 255)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise FormatError(
            f"{path}: mask value {int(px[y, x])} at pixel ({int(y)}, {int(x)}) "
            "is neither 0 nor 255"
        )
    return (px == 255).astype(np.uint8)


def save_mask(path, mask01: np.ndarray) -> None:
    mask01 = np.asarray(mask01)
    if not np.isin(mask01, (0, 1)).all():
        raise ContractError("mask must contain only 0/1 values")
    save_image(path, (mask01 * 255).astype(np.uint8))


def read_fplanes(path) -> np.ndarray:
    """Read an FPLANES file as a (planes, height, width) float32 array."""
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0 or nl > 128:
        raise FormatError(f"{path}: missing FPLANES header line at byte 0")
    fields = data[:nl].split()
    if len(fields) != 4 or fields[0] != b"FPLANES":
        raise FormatError(f"{path}: malformed FPLANES header at byte 0: {data[:nl]!r}")
    try:
        planes, width, height = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError(f"{path}: non-integer FPLANES dimensions at byte 8") from None
    if planes < 1 or width < 1 or height < 1:
        raise FormatError(f"{path}: non-positive FPLANES dimensions")
    need = planes * height * width * 4
    payload = data[nl + 1 :]
    if len(payload) != need:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes from byte {nl + 1}, expected {need}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(planes, height, width)
    return values.copy()


def write_fplanes(path, planes: np.ndarray) -> None:
    """Write a (planes, height, width) array as little-endian float32."""
    arr = np.asarray(planes)
    if arr.ndim != 3:
        raise ContractError("FPLANES payload must be a 3-D array")
    p, h, w = arr.shape
    header = f"FPLANES {p} {w} {h}\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(arr, dtype="<f4").tobytes())


def write_region_vector(path, values: np.ndarray) -> None:
    """Store a per-region vector as a 1-plane, height-1 FPLANES file."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise ContractError("region vector must be 1-D")
    write_fplanes(path, vec.reshape(1, 1, -1))


def read_region_vector(path) -> np.ndarray:
    arr = read_fplanes(path)
    if arr.shape[0] != 1 or arr.shape[1] != 1:
        raise FormatError(f"{path}: expected a 1-plane height-1 region vector")
    return arr[0, 0].astype(np.float64)


def load_prob_map(path) -> np.ndarray:
    """Load a 4-class pixel probability map, validating range and per-pixel sums.

    Returns a (4, H, W) float64 array clipped to [0, 1].
    """
    arr = read_fplanes(path)
    if arr.shape[0] != PROB_CLASSES:
        raise FormatError(
            f"{path}: probability map needs {PROB_CLASSES} planes, found {arr.shape[0]}"
        )
    values = arr.astype(np.float64)
    lo, hi = values.min(), values.max()
    if lo < -VALUE_TOL or hi > 1.0 + VALUE_TOL:
        raise FormatError(
            f"{path}: probability value out of range [0, 1]: min={lo!r} max={hi!r}"
        )
    sums = values.sum(axis=0)
    off = np.abs(sums - 1.0) > SUM_TOL
    if off.any():
        y, x = np.argwhere(off)[0]
        raise FormatError(
            f"{path}: probabilities at pixel ({int(y)}, {int(x)}) sum to "
            f"{sums[y, x]:.6f}, outside 1 +/- {SUM_TOL}"
        )
    return np.clip(values, 0.0, 1.0)


def save_prob_map(path, probs: np.ndarray) -> None:
    """Validate and write a 4-class pixel probability map."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 3 or probs.shape[0] != PROB_CLASSES:
        raise ContractError("probability map must have shape (4, H, W)")
    if probs.min() < -VALUE_TOL or probs.max() > 1.0 + VALUE_TOL:
        raise ContractError("probability values must lie in [0, 1]")
    sums = probs.sum(axis=0)
    if np.abs(sums - 1.0).max() > SUM_TOL:
        raise ContractError("per-pixel class probabilities must sum to 1")
    write_fplanes(path, probs)
