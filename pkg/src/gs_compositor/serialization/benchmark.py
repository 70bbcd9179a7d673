"""Locality benchmark comparing point orderings.

A good serialization keeps nearby points close in the sequence. For random
point pairs we correlate (Spearman) the distance between their sequence
positions with their Euclidean distance. Morton order is only used here,
as a comparison baseline.
"""

from typing import Dict

import numpy as np
from scipy.stats import spearmanr

from ..config.constants import DEFAULT_HILBERT_ORDER
from ..core.errors import DomainError
from ..core.utils import make_rng
from .hilbert import order_points, quantize


def morton_order(points: np.ndarray, p: int = DEFAULT_HILBERT_ORDER) -> np.ndarray:
    """Z-order permutation of 3D points on the same quantization grid"""
    cells = quantize(np.asarray(points, dtype=np.float64), p)
    keys = np.zeros(cells.shape[0], dtype=np.int64)
    for bit in range(p - 1, -1, -1):
        for axis in range(3):
            keys = (keys << 1) | ((cells[:, axis] >> bit) & 1)
    return np.lexsort((np.arange(cells.shape[0]), keys)).astype(np.int64)


def locality_correlation(
        points: np.ndarray,
        perm: np.ndarray,
        n_pairs: int,
        rng: np.random.Generator,
) -> float:
    """Spearman correlation of sequence-position distance vs Euclidean distance"""
    n = points.shape[0]
    if n < 2:
        raise DomainError("locality needs at least two points")
    rank = np.empty(n, dtype=np.int64)
    rank[perm] = np.arange(n)
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n - 1, size=n_pairs)
    j = np.where(j >= i, j + 1, j)  # distinct partner
    seq_dist = np.abs(rank[i] - rank[j])
    euclid = np.linalg.norm(points[i] - points[j], axis=1)
    rho, _ = spearmanr(seq_dist, euclid)
    return float(rho)


def run_locality_benchmark(
        n_points: int = 1000,
        n_pairs: int = 5000,
        seed: int = 0,
        p: int = DEFAULT_HILBERT_ORDER,
) -> Dict[str, float]:
    """Locality of Hilbert, Morton and random orderings of a uniform cloud"""
    points = make_rng(seed, 0).random((n_points, 3))
    orders = {
        "hilbert": order_points(points, p),
        "morton": morton_order(points, p),
        "random": make_rng(seed, 1).permutation(n_points).astype(np.int64),
    }
    return {
        name: locality_correlation(points, perm, n_pairs, make_rng(seed, 2))
        for name, perm in orders.items()
    }
