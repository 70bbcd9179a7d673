"""Frozen random-feature perceptual pyramid.

Three stride-2 3x3 convolutions with GELU, weights drawn once from a fixed
seed. The perceptual distance is the mean over levels of the per-level
feature MSE.
"""

from functools import lru_cache
from typing import List, Tuple

import numpy as np

from ..config.constants import PERCEPTUAL_CHANNELS, PERCEPTUAL_MIN_SIDE, PERCEPTUAL_SEED
from ..core.errors import DomainError
from ..core.utils import make_rng
from ..nn import functional as F

Level = Tuple[np.ndarray, np.ndarray]


@lru_cache(maxsize=1)
def pyramid_weights() -> Tuple[Level, ...]:
    """(w, b) per level, float64, read-only"""
    rng = make_rng(PERCEPTUAL_SEED)
    levels = []
    cin = 3
    for cout in PERCEPTUAL_CHANNELS:
        w = rng.standard_normal((cout, cin, 3, 3)) * np.sqrt(2.0 / (9 * cin))
        b = np.zeros(cout)
        w.flags.writeable = False
        b.flags.writeable = False
        levels.append((w, b))
        cin = cout
    return tuple(levels)


def check_size(image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[0] != 3:
        raise DomainError(f"perceptual features need a (3, H, W) image, got {image.shape}")
    if min(image.shape[1:]) < PERCEPTUAL_MIN_SIDE:
        raise DomainError(
            f"perceptual features need H, W >= {PERCEPTUAL_MIN_SIDE}, got {image.shape[1:]}"
        )


def features_fwd(image: np.ndarray) -> Tuple[List[np.ndarray], List[tuple]]:
    """Per-level GELU activations and the caches for :func:`features_bwd`"""
    check_size(image)
    x = np.asarray(image, dtype=np.float64)
    feats, caches = [], []
    for w, b in pyramid_weights():
        s, conv_cache = F.conv3x3_fwd(x, w, b, stride=2)
        x, gelu_cache = F.gelu_fwd(s)
        feats.append(x)
        caches.append((conv_cache, gelu_cache))
    return feats, caches


def features_bwd(d_feats: List[np.ndarray], caches: List[tuple]) -> np.ndarray:
    """Gradient w.r.t. the image given gradients w.r.t. each level's activations"""
    carry = None
    for d_level, (conv_cache, gelu_cache) in zip(reversed(d_feats), reversed(caches)):
        d_act = d_level if carry is None else d_level + carry
        carry, _ = F.conv3x3_bwd(F.gelu_bwd(d_act, gelu_cache), conv_cache)
    return carry
