# src/gs_compositor/formats/images.py
"""Image files: 8-bit binary PPM previews and masks, float PFM images and depth.

Arrays are channel-first float32. PPM goes through Pillow; PFM is written
little-endian (scale -1.0) with rows stored bottom to top.
"""

import io
import re
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..core.errors import DataIOError, DomainError
from ..core.utils import atomic_write_bytes, read_bytes

PathLike = Union[str, Path]

_PFM_HEADER = re.compile(rb"^(PF|Pf)\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s")


def to_uint8(image: np.ndarray) -> np.ndarray:
    """(C, H, W) floats in [0, 1] -> (H, W, 3) uint8; one channel is replicated"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise DomainError(f"expected a (1|3, H, W) image, got {image.shape}")
    if image.shape[0] == 1:
        image = np.repeat(image, 3, axis=0)
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return np.ascontiguousarray(pixels.transpose(1, 2, 0))


def write_ppm(path: PathLike, image: np.ndarray) -> Path:
    """Binary P6 PPM, 8 bits per channel"""
    buffer = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buffer, format="PPM")
    return atomic_write_bytes(path, buffer.getvalue())


def read_ppm(path: PathLike) -> np.ndarray:
    """(3, H, W) float32 in [0, 1]"""
    try:
        with Image.open(io.BytesIO(read_bytes(path))) as img:
            if img.format != "PPM":
                raise DataIOError(f"Not a PPM file ({img.format})", path)
            pixels = np.asarray(img.convert("RGB"), dtype=np.float32)
    except (UnidentifiedImageError, ValueError) as e:
        raise DataIOError(f"Cannot decode PPM ({e})", path) from e
    return (pixels / 255.0).transpose(2, 0, 1).copy()


def write_mask_ppm(path: PathLike, mask: np.ndarray) -> Path:
    """(1, H, W) mask -> PPM with values {0, 255}"""
    binary = (np.asarray(mask) > 0.5).astype(np.float64)
    return write_ppm(path, binary.reshape(1, *binary.shape[-2:]))


def read_mask_ppm(path: PathLike) -> np.ndarray:
    """(1, H, W) float32 in {0, 1}"""
    return (read_ppm(path)[:1] > 0.5).astype(np.float32)


def write_pfm(path: PathLike, array: np.ndarray) -> Path:
    """(1|3, H, W) float array -> little-endian PFM"""
    array = np.asarray(array, dtype=np.float32)
    if array.ndim != 3 or array.shape[0] not in (1, 3):
        raise DomainError(f"PFM stores (1|3, H, W) arrays, got {array.shape}")
    channels, height, width = array.shape
    header = b"PF\n" if channels == 3 else b"Pf\n"
    header += f"{width} {height}\n-1.0\n".encode("ascii")
    rows = array.transpose(1, 2, 0)[::-1]
    return atomic_write_bytes(path, header + np.ascontiguousarray(rows, dtype="<f4").tobytes())


def read_pfm(path: PathLike) -> np.ndarray:
    """(1|3, H, W) float32 from a PFM of either byte order"""
    data = read_bytes(path)
    match = _PFM_HEADER.match(data)
    if match is None:
        raise DataIOError("Not a PFM file", path)
    kind, width, height, scale = match.groups()
    channels = 3 if kind == b"PF" else 1
    width, height = int(width), int(height)
    try:
        dtype = "<f4" if float(scale) < 0 else ">f4"
    except ValueError as e:
        raise DataIOError("Bad PFM scale", path) from e
    body = data[match.end():]
    expected = width * height * channels * 4
    if len(body) != expected:
        raise DataIOError(f"PFM payload is {len(body)} bytes, expected {expected}", path)
    rows = np.frombuffer(body, dtype=dtype).reshape(height, width, channels)[::-1]
    return rows.transpose(2, 0, 1).astype(np.float32)
