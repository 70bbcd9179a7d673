"""Hilbert curve index <-> cell coordinate codec in 2 and 3 dimensions.

The curve uses the Gray-code/rotation construction in "transposed" form:
coordinates are rotated and reflected level by level, Gray-coded, and the
bits of the resulting per-axis words are interleaved (axis 0 most
significant) into the curve index. Index 0 is the all-zeros cell and
consecutive indices always differ by one unit step along one axis.

All functions work on numpy ``int64`` arrays so that whole point clouds are
encoded at once; the scalar ``h2_*``/``h3_*`` helpers wrap them.
"""

from typing import List, Sequence, Tuple

import numpy as np

from ..config.constants import DEFAULT_HILBERT_ORDER, MAX_HILBERT_ORDER
from ..config.validators import require_finite
from ..core.errors import DomainError


def check_order(p: int, dims: int) -> None:
    if dims not in (2, 3):
        raise DomainError(f"dims must be 2 or 3, got {dims}")
    if not isinstance(p, (int, np.integer)) or not 1 <= p <= MAX_HILBERT_ORDER:
        raise DomainError(f"curve order must be in [1, {MAX_HILBERT_ORDER}], got {p}")


def _axes_to_transpose(axes: List[np.ndarray], p: int) -> List[np.ndarray]:
    x = [a.copy() for a in axes]
    n = len(x)
    q = 1 << (p - 1)
    while q > 1:
        low = q - 1
        for i in range(n):
            hit = (x[i] & q) != 0
            t = np.where(hit, 0, (x[0] ^ x[i]) & low)
            x0 = np.where(hit, x[0] ^ low, x[0] ^ t)
            if i > 0:
                x[i] = x[i] ^ t
            x[0] = x0
        q >>= 1
    for i in range(1, n):
        x[i] = x[i] ^ x[i - 1]
    t = np.zeros_like(x[0])
    q = 1 << (p - 1)
    while q > 1:
        t = np.where((x[n - 1] & q) != 0, t ^ (q - 1), t)
        q >>= 1
    return [xi ^ t for xi in x]


def _transpose_to_axes(x: List[np.ndarray], p: int) -> List[np.ndarray]:
    x = [a.copy() for a in x]
    n = len(x)
    t = x[n - 1] >> 1
    for i in range(n - 1, 0, -1):
        x[i] = x[i] ^ x[i - 1]
    x[0] = x[0] ^ t
    q = 2
    side = 1 << p
    while q != side:
        low = q - 1
        for i in range(n - 1, -1, -1):
            hit = (x[i] & q) != 0
            t = np.where(hit, 0, (x[0] ^ x[i]) & low)
            x0 = np.where(hit, x[0] ^ low, x[0] ^ t)
            if i > 0:
                x[i] = x[i] ^ t
            x[0] = x0
        q <<= 1
    return x


def _interleave(x: List[np.ndarray], p: int) -> np.ndarray:
    n = len(x)
    index = np.zeros_like(x[0])
    for bit in range(p - 1, -1, -1):
        for i in range(n):
            index = (index << 1) | ((x[i] >> bit) & 1)
    return index


def _deinterleave(index: np.ndarray, p: int, n: int) -> List[np.ndarray]:
    x = [np.zeros_like(index) for _ in range(n)]
    for bit in range(p):
        for i in range(n):
            shift = bit * n + (n - 1 - i)
            x[i] = x[i] | (((index >> shift) & 1) << bit)
    return x


def hilbert_encode(coords: np.ndarray, p: int) -> np.ndarray:
    """
    Curve index of each cell

    Args:
        coords: (N, dims) integer cell coordinates in [0, 2^p)
        p: curve order

    Returns:
        (N,) int64 curve indices in [0, 2^(dims*p))
    """
    coords = np.asarray(coords)
    if coords.ndim != 2:
        raise DomainError(f"coords must be (N, dims), got shape {coords.shape}")
    dims = coords.shape[1]
    check_order(p, dims)
    coords = coords.astype(np.int64)
    if coords.size and (coords.min() < 0 or coords.max() >= (1 << p)):
        raise DomainError(f"cell coordinates out of range [0, {1 << p})")
    axes = [coords[:, i] for i in range(dims)]
    return _interleave(_axes_to_transpose(axes, p), p)


def hilbert_decode(indices: np.ndarray, p: int, dims: int) -> np.ndarray:
    """Inverse of :func:`hilbert_encode`; returns (N, dims) int64 coordinates"""
    check_order(p, dims)
    indices = np.asarray(indices).astype(np.int64).reshape(-1)
    if indices.size and (indices.min() < 0 or indices.max() >= (1 << (dims * p))):
        raise DomainError(f"curve index out of range [0, {1 << (dims * p)})")
    axes = _transpose_to_axes(_deinterleave(indices, p, dims), p)
    return np.stack(axes, axis=1)


def h2_index_to_coord(d: int, p: int) -> Tuple[int, int]:
    x, y = hilbert_decode(np.array([d]), p, 2)[0]
    return int(x), int(y)


def h2_coord_to_index(x: int, y: int, p: int) -> int:
    return int(hilbert_encode(np.array([[x, y]]), p)[0])


def h3_index_to_coord(d: int, p: int) -> Tuple[int, int, int]:
    x, y, z = hilbert_decode(np.array([d]), p, 3)[0]
    return int(x), int(y), int(z)


def h3_coord_to_index(x: int, y: int, z: int, p: int) -> int:
    return int(hilbert_encode(np.array([[x, y, z]]), p)[0])


def quantize(points: np.ndarray, p: int) -> np.ndarray:
    """
    Cells of the 2^p-per-axis grid spanning the points' bounding box

    Axes with zero extent map to cell 0.
    """
    lo = points.min(axis=0)
    extent = points.max(axis=0) - lo
    cells_per_axis = 1 << p
    safe = np.where(extent > 0, extent, 1.0)
    cells = np.floor((points - lo) / safe * cells_per_axis).astype(np.int64)
    cells = np.clip(cells, 0, cells_per_axis - 1)
    cells[:, extent <= 0] = 0
    return cells


def order_points(centers: Sequence[Sequence[float]], p: int = DEFAULT_HILBERT_ORDER) -> np.ndarray:
    """
    Permutation that sorts 3D points along the Hilbert curve

    Each point goes to its cell of the bounding-box grid; points are ordered
    by the cell's curve index, ties broken by original index.

    Returns:
        (N,) int64 permutation; ``centers[perm]`` is the curve-ordered sequence
    """
    points = np.asarray(centers, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError("order_points needs at least one point")
    if points.shape[1] != 3:
        raise DomainError(f"expected 3D points, got shape {points.shape}")
    require_finite("centers", points)
    check_order(p, 3)
    keys = hilbert_encode(quantize(points, p), p)
    return np.lexsort((np.arange(points.shape[0]), keys)).astype(np.int64)
