"""Image quality metrics: PSNR and block SSIM, with mask-restricted variants"""

import math
from typing import Optional

import numpy as np

from ..config.constants import PSNR_CAP_DB, PSNR_MSE_FLOOR, SSIM_K1, SSIM_K2, SSIM_WINDOW
from ..core.errors import DomainError


def _pair(a: np.ndarray, b: np.ndarray, what: str):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"{what}: shapes {a.shape} and {b.shape} differ")
    return a, b


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    if mse < PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10 log10(peak^2 / mse), capped at 99 dB"""
    a, b = _pair(a, b, "psnr")
    return psnr_from_mse(float(np.mean((a - b) ** 2)), peak)


def _pixel_mask(mask: np.ndarray, shape) -> np.ndarray:
    mask = np.asarray(mask) > 0.5
    if mask.ndim == 3:
        mask = mask[0]
    if mask.shape != tuple(shape[-2:]):
        raise DomainError(f"mask has shape {mask.shape}, image {tuple(shape)}")
    return mask


def psnr_masked(a: np.ndarray, b: np.ndarray, mask: np.ndarray, peak: float = 1.0) -> Optional[float]:
    """PSNR over the masked pixels (all channels); None when the mask is empty"""
    a, b = _pair(a, b, "psnr_masked")
    m = _pixel_mask(mask, a.shape)
    if not m.any():
        return None
    diff = (a - b)[..., m] if a.ndim == 3 else (a - b)[m]
    return psnr_from_mse(float(np.mean(diff ** 2)), peak)


def _gray(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=0) if x.ndim == 3 else x


def _ssim_windows(a: np.ndarray, b: np.ndarray, peak: float) -> np.ndarray:
    """SSIM of each non-overlapping 8x8 window of the grayscale images, (nh, nw)"""
    ga, gb = _gray(a), _gray(b)
    h, w = ga.shape
    k = SSIM_WINDOW
    if h < k or w < k:
        raise DomainError(f"ssim needs images of at least {k}x{k}, got {h}x{w}")
    nh, nw = h // k, w // k

    def blocks(g: np.ndarray) -> np.ndarray:
        return g[:nh * k, :nw * k].reshape(nh, k, nw, k).transpose(0, 2, 1, 3).reshape(nh, nw, k * k)

    xa, xb = blocks(ga), blocks(gb)
    mu_a, mu_b = xa.mean(axis=-1), xb.mean(axis=-1)
    var_a, var_b = xa.var(axis=-1), xb.var(axis=-1)
    cov = ((xa - mu_a[..., None]) * (xb - mu_b[..., None])).mean(axis=-1)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    )


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean SSIM over 8x8 stride-8 windows of the channel-mean images"""
    a, b = _pair(a, b, "ssim")
    return float(np.mean(_ssim_windows(a, b, peak)))


def ssim_masked(a: np.ndarray, b: np.ndarray, mask: np.ndarray, peak: float = 1.0) -> Optional[float]:
    """Mean SSIM over the windows that intersect the mask; None when none do"""
    a, b = _pair(a, b, "ssim_masked")
    m = _pixel_mask(mask, a.shape)
    values = _ssim_windows(a, b, peak)
    nh, nw = values.shape
    k = SSIM_WINDOW
    hit = m[:nh * k, :nw * k].reshape(nh, k, nw, k).any(axis=(1, 3))
    if not hit.any():
        return None
    return float(np.mean(values[hit]))
