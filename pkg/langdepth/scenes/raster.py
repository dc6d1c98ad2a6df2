"""
This module contains raster file I/O: the PDR1 depth/mask format and 8-bit
PPM/PGM images.

PDR1 layout: magic ``b"PDR1"``, then little-endian u32 H, W, C and dtype
code (0 = float32, 1 = uint8), then the row-major little-endian payload.
"""

import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from langdepth.utils.errors import DataError

PDR_MAGIC = b"PDR1"
_HEADER = struct.Struct("<4I")
_DTYPES: Dict[int, np.dtype] = {
    0: np.dtype("<f4"),
    1: np.dtype("u1"),
}

PathLike = Union[str, Path]


def pixels_from_image(image: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values to 8 bits: round(255 * x)."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def image_from_pixels(pixels: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pixels_from_image` on quantized images."""
    return pixels.astype(np.float32) / np.float32(255.0)


def write_pdr(array: np.ndarray, path: PathLike) -> None:
    """
    Write an HxW or HxWxC float32/uint8 raster.

    Args:
        array: The raster.
        path: Destination file.
    """
    if array.ndim == 2:
        array = array[:, :, None]
    if array.ndim != 3:
        raise DataError(f"PDR rasters are 2-D or 3-D, got {array.shape}")
    if array.dtype == np.float32:
        code = 0
    elif array.dtype == np.uint8:
        code = 1
    else:
        raise DataError(f"Unsupported PDR dtype {array.dtype}", path)
    dtype = _DTYPES[code]
    h, w, c = array.shape
    with open(path, "wb") as f:
        f.write(PDR_MAGIC)
        f.write(_HEADER.pack(h, w, c, code))
        f.write(np.ascontiguousarray(array, dtype=dtype).tobytes())


def read_pdr(path: PathLike) -> np.ndarray:
    """
    Read a PDR1 raster.

    Args:
        path: Source file.

    Returns:
        HxW array when C == 1, else HxWxC, in native byte order.
    """
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise DataError("Cannot read raster file", path) from exc
    header_size = len(PDR_MAGIC) + _HEADER.size
    if len(blob) < header_size or blob[: len(PDR_MAGIC)] != PDR_MAGIC:
        raise DataError("Not a PDR1 raster", path)
    h, w, c, code = _HEADER.unpack_from(blob, len(PDR_MAGIC))
    if code not in _DTYPES:
        raise DataError(f"Unknown PDR dtype code {code}", path)
    dtype = _DTYPES[code]
    expected = h * w * c * dtype.itemsize
    payload = blob[header_size:]
    if len(payload) != expected:
        raise DataError(
            f"PDR payload has {len(payload)} bytes, expected {expected}",
            path,
        )
    array = np.frombuffer(payload, dtype=dtype).reshape(h, w, c)
    array = array.astype(dtype.newbyteorder("="))
    return array[:, :, 0] if c == 1 else array


def write_ppm(image: np.ndarray, path: PathLike) -> None:
    """Write an HxWx3 [0, 1] image as binary PPM (P6)."""
    Image.fromarray(pixels_from_image(image)).save(
        path, format="PPM"
    )


def read_ppm(path: PathLike) -> np.ndarray:
    """Read a binary PPM written by :func:`write_ppm`."""
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                raise DataError(f"Expected an RGB PPM, got {img.mode}", path)
            pixels = np.asarray(img, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise DataError("Cannot read image file", path) from exc
    return image_from_pixels(pixels)


def write_pgm(gray: np.ndarray, path: PathLike) -> None:
    """Write an HxW uint8 array as binary PGM (P5)."""
    Image.fromarray(gray.astype(np.uint8)).save(path, format="PPM")


def write_rgb_ppm(rgb: np.ndarray, path: PathLike) -> None:
    """Write an HxWx3 uint8 array as binary PPM (P6)."""
    Image.fromarray(rgb.astype(np.uint8)).save(path, format="PPM")
