# src/gs_compositor/nn/model.py
"""Compositing network assembly shared by the 2D (per-view) and 3D (Gaussian grid) models.

patch_embed -> blocks of window-attention layers, each block wrapped in a
residual connection -> unpatch_head. The 2D model additionally exports the
last block's features upsampled to pixel resolution.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import structlog

from ..config.constants import INIT_STD, MLP_RATIO
from ..config.settings import ModelConfig
from ..core.errors import DomainError
from ..core.utils import make_rng
from . import layers as L
from .params import ModelParams

logger = structlog.get_logger()

ParamSource = Union[ModelParams, Mapping[str, np.ndarray]]


def _values(params: ParamSource) -> Mapping[str, np.ndarray]:
    return params.values if isinstance(params, ModelParams) else params


def _layer_prefix(block: int, layer: int) -> str:
    return f"blocks.{block}.layers.{layer}"


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """
    Seeded float32 initialization

    Convolutions use He-normal weights, linear layers N(0, 0.02), biases and
    LN shifts zero, LN scales one.
    """
    rng = make_rng(seed)
    params = ModelParams()
    e, s, p = cfg.embed_dim, cfg.stem_channels, cfg.patch

    def normal(shape: Tuple[int, ...], std: float) -> np.ndarray:
        return (rng.standard_normal(shape) * std).astype(np.float32)

    def zeros(*shape: int) -> np.ndarray:
        return np.zeros(shape, dtype=np.float32)

    params.add("embed.conv1.w", normal((s, cfg.input_channels, 3, 3), np.sqrt(2.0 / (9 * cfg.input_channels))))
    params.add("embed.conv1.b", zeros(s))
    params.add("embed.conv2.w", normal((s, s, 3, 3), np.sqrt(2.0 / (9 * s))))
    params.add("embed.conv2.b", zeros(s))
    params.add("embed.proj.w", normal((s * p * p, e), INIT_STD))
    params.add("embed.proj.b", zeros(e))
    for b in range(cfg.blocks):
        for layer in range(cfg.layers_per_block):
            pre = _layer_prefix(b, layer)
            params.add(f"{pre}.ln1.gamma", np.ones(e, dtype=np.float32))
            params.add(f"{pre}.ln1.beta", zeros(e))
            for proj in ("q", "k", "v", "o"):
                params.add(f"{pre}.attn.w{proj}", normal((e, e), INIT_STD))
                params.add(f"{pre}.attn.b{proj}", zeros(e))
            params.add(f"{pre}.ln2.gamma", np.ones(e, dtype=np.float32))
            params.add(f"{pre}.ln2.beta", zeros(e))
            params.add(f"{pre}.mlp.w1", normal((e, MLP_RATIO * e), INIT_STD))
            params.add(f"{pre}.mlp.b1", zeros(MLP_RATIO * e))
            params.add(f"{pre}.mlp.w2", normal((MLP_RATIO * e, e), INIT_STD))
            params.add(f"{pre}.mlp.b2", zeros(e))
    params.add("head.w", normal((e, cfg.output_channels * p * p), INIT_STD))
    params.add("head.b", zeros(cfg.output_channels))
    logger.debug("Initialized model parameters", count=len(params), size=params.size, seed=seed)
    return params


def effective_window(cfg: ModelConfig, height: int, width: int) -> int:
    """Window side used on a (height/P, width/P) feature map"""
    return max(1, min(cfg.window, height // cfg.patch, width // cfg.patch))


@dataclass
class ModelOutput:
    out: np.ndarray          # (Cout, H, W)
    features: np.ndarray     # (E, H/P, W/P) last block output
    cache: Any


def model_forward(x: np.ndarray, params: ParamSource, cfg: ModelConfig) -> ModelOutput:
    """Forward pass keeping everything needed by :func:`model_backward`"""
    if x.ndim != 3 or x.shape[0] != cfg.input_channels:
        raise DomainError(
            f"model expects ({cfg.input_channels}, H, W) input, got {tuple(x.shape)}"
        )
    values = _values(params)
    _, h, w = x.shape
    window = effective_window(cfg, h, w)

    f, embed_cache = L.patch_embed_fwd(x, L.subset(values, "embed"), cfg.patch)
    layer_caches: List[List[Any]] = []
    for b in range(cfg.blocks):
        block_in = f
        caches = []
        for layer in range(cfg.layers_per_block):
            f, cache = L.swin_layer_fwd(
                f, L.subset(values, _layer_prefix(b, layer)), cfg.heads, window
            )
            caches.append(cache)
        f = f + block_in
        layer_caches.append(caches)
    out, head_cache = L.unpatch_head_fwd(f, L.subset(values, "head"), cfg.patch)
    return ModelOutput(out=out, features=f, cache=(embed_cache, layer_caches, head_cache, cfg))


def model_backward(
        d_out: np.ndarray,
        cache: Any,
        d_features: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Backward pass of :func:`model_forward`

    Args:
        d_out: gradient w.r.t. the head output
        cache: ``ModelOutput.cache``
        d_features: optional gradient w.r.t. the last block's features

    Returns:
        (gradient w.r.t. the input, gradients keyed by full parameter name)
    """
    embed_cache, layer_caches, head_cache, cfg = cache
    grads: Dict[str, np.ndarray] = {}

    df, g = L.unpatch_head_bwd(d_out, head_cache)
    grads.update(L.prefixed("head", g))
    if d_features is not None:
        df = df + d_features
    for b in reversed(range(cfg.blocks)):
        d_block_in = df
        for layer in reversed(range(cfg.layers_per_block)):
            df, g = L.swin_layer_bwd(df, layer_caches[b][layer])
            grads.update(L.prefixed(_layer_prefix(b, layer), g))
        df = df + d_block_in
    dx, g = L.patch_embed_bwd(df, embed_cache)
    grads.update(L.prefixed("embed", g))
    return dx, grads


def upsample_features(features: np.ndarray, patch: int) -> np.ndarray:
    """Nearest-neighbor upsampling: every pixel of a patch gets the patch's vector"""
    return np.repeat(np.repeat(features, patch, axis=1), patch, axis=2)


def downsample_feature_grad(d_pixels: np.ndarray, patch: int) -> np.ndarray:
    """Adjoint of :func:`upsample_features`"""
    e, h, w = d_pixels.shape
    return d_pixels.reshape(e, h // patch, patch, w // patch, patch).sum(axis=(2, 4))


def m2d_forward(
        x: np.ndarray, params: ParamSource, cfg: ModelConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-view compositing model

    Args:
        x: (7, H, W) concatenation of composite image, background and depth

    Returns:
        (H_hat (3, H, W), F_feat (E, H, W))
    """
    result = model_forward(x, params, cfg)
    return result.out, upsample_features(result.features, cfg.patch)


def m3d_forward(x: np.ndarray, params: ParamSource, cfg: ModelConfig) -> np.ndarray:
    """
    Gaussian-grid model

    Args:
        x: (n + 3, S, S) concatenation of Psi(Phi(F)) and Psi(C')

    Returns:
        (3, S, S) predicted color grid
    """
    return model_forward(x, params, cfg).out
