"""Forward/backward kernels on numpy arrays.

Every ``*_fwd`` returns ``(out, cache)`` and the matching ``*_bwd`` takes
``(dout, cache)`` and returns ``(dx, grads)`` where ``grads`` maps the
kernel's parameter names to gradients. Token tensors are channel-last
(..., C); images and feature maps are channel-first (C, H, W).
"""

import math
from typing import Dict, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..config.constants import LAYER_NORM_EPS
from ..core.errors import DomainError

Grads = Dict[str, np.ndarray]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _sum_leading(x: np.ndarray, keep: int) -> np.ndarray:
    return x.reshape(-1, *x.shape[x.ndim - keep:]).sum(axis=0)


# ---------------------------------------------------------------- activations

def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, x * Phi(x)"""
    return (0.5 * x * (1.0 + erf(x / _SQRT2))).astype(x.dtype, copy=False)


def gelu_fwd(x: np.ndarray):
    return gelu(x), x


def gelu_bwd(dout: np.ndarray, cache) -> np.ndarray:
    x = cache
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return (dout * (cdf + x * pdf)).astype(x.dtype, copy=False)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


# ---------------------------------------------------------------- linear

def linear_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """(..., Cin) @ (Cin, Cout) + (Cout,)"""
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise DomainError(
            f"linear shapes do not match: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    return x @ w + b, (x, w)


def linear_bwd(dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
    x, w = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return dout @ w.T, {"w": x2.T @ d2, "b": d2.sum(axis=0)}


# ---------------------------------------------------------------- layer norm

def layer_norm_fwd(
        x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LAYER_NORM_EPS
):
    """Normalize over the last axis with population variance, then scale and shift"""
    channels = x.shape[-1] if x.ndim else 0
    if channels == 0:
        raise DomainError("layer norm needs at least one channel")
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DomainError(f"layer norm affine shapes {gamma.shape}/{beta.shape} vs C={channels}")
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    return xhat * gamma + beta, (xhat, rstd, gamma)


def layer_norm_bwd(dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
    xhat, rstd, gamma = cache
    dxhat = dout * gamma
    dx = rstd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
    )
    return dx, {"gamma": _sum_leading(dout * xhat, 1), "beta": _sum_leading(dout, 1)}


# ---------------------------------------------------------------- windows and patches

def window_partition(x: np.ndarray, w: int) -> np.ndarray:
    """(C, H, W) -> (nW, w*w, C); windows and their tokens in row-major order"""
    c, h, wd = x.shape
    if w < 1 or h % w or wd % w:
        raise DomainError(f"window {w} does not divide feature map {h}x{wd}")
    return (
        x.reshape(c, h // w, w, wd // w, w)
        .transpose(1, 3, 2, 4, 0)
        .reshape(-1, w * w, c)
    )


def window_merge(windows: np.ndarray, w: int, h: int, wd: int) -> np.ndarray:
    """Inverse of :func:`window_partition`"""
    if h % w or wd % w or windows.shape[:2] != ((h // w) * (wd // w), w * w):
        raise DomainError(f"windows {windows.shape} do not tile {h}x{wd} with w={w}")
    c = windows.shape[2]
    return (
        windows.reshape(h // w, wd // w, w, w, c)
        .transpose(4, 0, 2, 1, 3)
        .reshape(c, h, wd)
    )


def patchify(x: np.ndarray, p: int) -> np.ndarray:
    """(C, H, W) -> (H/p * W/p, C*p*p) patch vectors, patches in row-major order"""
    c, h, w = x.shape
    if p < 1 or h % p or w % p:
        raise DomainError(f"patch size {p} does not divide {h}x{w}")
    return (
        x.reshape(c, h // p, p, w // p, p)
        .transpose(1, 3, 0, 2, 4)
        .reshape((h // p) * (w // p), c * p * p)
    )


def unpatchify(tokens: np.ndarray, p: int, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`patchify`"""
    c = tokens.shape[1] // (p * p)
    return (
        tokens.reshape(h // p, w // p, c, p, p)
        .transpose(2, 0, 3, 1, 4)
        .reshape(c, h, w)
    )


# ---------------------------------------------------------------- convolution

def conv3x3_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1):
    """3x3 convolution with zero padding 1; x (Cin, H, W), w (Cout, Cin, 3, 3)"""
    cin, h, wd = x.shape
    if w.shape[1:] != (cin, 3, 3) or b.shape != (w.shape[0],):
        raise DomainError(f"conv shapes do not match: x {x.shape}, w {w.shape}, b {b.shape}")
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = windows.shape[1:3]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(ho * wo, cin * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.T.reshape(w.shape[0], ho, wo), (cols, w, x.shape, stride, ho, wo)


def conv3x3_bwd(dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
    cols, w, (cin, h, wd), stride, ho, wo = cache
    d2 = dout.reshape(w.shape[0], -1).T
    dw = (d2.T @ cols).reshape(w.shape)
    dcols = (d2 @ w.reshape(w.shape[0], -1)).reshape(ho, wo, cin, 3, 3)
    dpad = np.zeros((cin, h + 2, wd + 2), dtype=dcols.dtype)
    for i in range(3):
        for j in range(3):
            dpad[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                dcols[:, :, :, i, j].transpose(2, 0, 1)
            )
    return dpad[:, 1:-1, 1:-1], {"w": dw, "b": d2.sum(axis=0)}
