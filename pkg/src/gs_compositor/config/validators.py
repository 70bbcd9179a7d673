# src/gs_compositor/config/validators.py
"""Reusable value checks for configuration models and operation arguments"""

import math
from typing import Sequence

import numpy as np

from ..core.errors import DomainError


def is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


def smallest_power_of_two_side(count: int) -> int:
    """Smallest S = 2^k with S * S >= count"""
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    side = 1
    while side * side < count:
        side *= 2
    return side


def require_finite(name: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{name} contains non-finite values")


def require_shape(name: str, array: np.ndarray, shape: Sequence[int]) -> None:
    """``shape`` entries of -1 match any extent"""
    if array.ndim != len(shape) or any(
            s != -1 and a != s for a, s in zip(array.shape, shape)
    ):
        raise DomainError(f"{name} has shape {tuple(array.shape)}, expected {tuple(shape)}")


def require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def require_divisible(name: str, value: int, divisor: int) -> None:
    if divisor <= 0 or value % divisor != 0:
        raise DomainError(f"{name}={value} is not divisible by {divisor}")


def log2_exact(value: int) -> int:
    if not is_power_of_two(value):
        raise DomainError(f"{value} is not a power of two")
    return int(math.log2(value))
