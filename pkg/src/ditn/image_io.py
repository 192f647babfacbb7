"""Image loading/saving and color conversion at the application boundary.

Images are ``H x W x 3`` uint8 RGB arrays. Only 8-bit PNGs are accepted:
grayscale is replicated to three channels, alpha is dropped, and 16-bit
files are rejected explicitly rather than silently truncated.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .tensor import DimensionError, Tensor

ImageU8 = np.ndarray  # H x W x 3 uint8

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class UnsupportedImageError(Exception):
    """Raised for non-PNG files or PNG variants outside the 8-bit contract."""


def _check_png_header(path) -> None:
    with open(path, "rb") as fh:
        header = fh.read(26)
    if len(header) < 26 or header[:8] != _PNG_SIGNATURE:
        raise UnsupportedImageError(f"{path}: not a PNG file")
    length, chunk = struct.unpack(">I4s", header[8:16])
    if chunk != b"IHDR" or length != 13:
        raise UnsupportedImageError(f"{path}: malformed PNG header")
    bit_depth = header[24]
    if bit_depth != 8:
        raise UnsupportedImageError(f"{path}: {bit_depth}-bit PNG is unsupported; only 8-bit files are accepted")


def load_image(path) -> ImageU8:
    """Read an 8-bit PNG as ``H x W x 3`` RGB."""
    _check_png_header(path)
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.uint8)


def save_image(img: ImageU8, path) -> None:
    """Write ``H x W x 3`` uint8 RGB as PNG (lossless round-trip)."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise DimensionError(f"save_image expects H x W x 3 uint8, got {arr.dtype} {tuple(arr.shape)}")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def to_float(img: ImageU8) -> Tensor:
    """uint8 ``H x W x 3`` to float32 ``3 x H x W`` in [0, 1]."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"to_float expects H x W x 3, got {tuple(arr.shape)}")
    return np.ascontiguousarray(arr.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))


def to_u8(t: Tensor) -> ImageU8:
    """float32 ``3 x H x W`` back to uint8 ``H x W x 3``.

    Values are clamped to [0, 1] and scaled by 255 with half-away-from-zero
    rounding, so 127.5 becomes 128.
    """
    if t.ndim != 3 or t.shape[0] != 3:
        raise DimensionError(f"to_u8 expects 3 x H x W, got {tuple(t.shape)}")
    scaled = np.clip(t, 0.0, 1.0) * np.float32(255.0)
    return np.floor(scaled + np.float32(0.5)).astype(np.uint8).transpose(1, 2, 0)


# BT.601 luma coefficients on the [16, 235] studio scale, the convention the
# standard super-resolution benchmarks are evaluated under.
_Y_COEFF = np.array([65.481, 128.553, 24.966], dtype=np.float64)


def rgb_to_y(img: ImageU8) -> Tensor:
    """Luma channel in [16, 235] from an ``H x W x 3`` uint8 image."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"rgb_to_y expects H x W x 3, got {tuple(arr.shape)}")
    unit = arr.astype(np.float64) / 255.0
    return (16.0 + unit @ _Y_COEFF).astype(np.float32)
