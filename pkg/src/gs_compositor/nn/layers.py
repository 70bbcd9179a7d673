"""Network layers: window attention, MLP, the residual window-attention layer,
the convolutional patch embedding and the unpatching head.

Parameters are passed as flat dicts with short names (``wq``, ``ln1.gamma``,
...); gradients come back under the same names.
"""

import math
from typing import Dict, Tuple

import numpy as np

from ..config.constants import MLP_RATIO
from ..core.errors import DomainError
from . import functional as F

Params = Dict[str, np.ndarray]
Grads = Dict[str, np.ndarray]


def prefixed(prefix: str, grads: Grads) -> Grads:
    return {f"{prefix}.{k}": v for k, v in grads.items()}


def subset(params: Params, prefix: str) -> Params:
    head = prefix + "."
    return {k[len(head):]: v for k, v in params.items() if k.startswith(head)}


# ---------------------------------------------------------------- window attention

def w_atten_fwd(x: np.ndarray, params: Params, heads: int):
    """
    Multi-head self-attention inside each window

    Args:
        x: (nW, N, C) window tokens
        params: wq, bq, wk, bk, wv, bv (C, C)/(C,) and output projection wo, bo
        heads: number of heads; C must be divisible by it

    Returns:
        (nW, N, C) output and the cache
    """
    n_win, n_tok, c = x.shape
    if heads < 1 or c % heads:
        raise DomainError(f"embedding {c} is not divisible by {heads} heads")
    d = c // heads
    scale = 1.0 / math.sqrt(d)

    def split(t: np.ndarray) -> np.ndarray:
        return t.reshape(n_win, n_tok, heads, d).transpose(0, 2, 1, 3)

    q, q_cache = F.linear_fwd(x, params["wq"], params["bq"])
    k, k_cache = F.linear_fwd(x, params["wk"], params["bk"])
    v, v_cache = F.linear_fwd(x, params["wv"], params["bv"])
    qh, kh, vh = split(q), split(k), split(v)
    attn = F.softmax((qh @ kh.transpose(0, 1, 3, 2)) * scale, axis=-1)
    mixed = (attn @ vh).transpose(0, 2, 1, 3).reshape(n_win, n_tok, c)
    out, o_cache = F.linear_fwd(mixed, params["wo"], params["bo"])
    return out, (qh, kh, vh, attn, scale, q_cache, k_cache, v_cache, o_cache)


def w_atten_bwd(dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
    qh, kh, vh, attn, scale, q_cache, k_cache, v_cache, o_cache = cache
    n_win, heads, n_tok, d = qh.shape
    c = heads * d

    dmixed, g_o = F.linear_bwd(dout, o_cache)
    dho = dmixed.reshape(n_win, n_tok, heads, d).transpose(0, 2, 1, 3)
    dattn = dho @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dho
    dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True)) * scale
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    def merge(t: np.ndarray) -> np.ndarray:
        return t.transpose(0, 2, 1, 3).reshape(n_win, n_tok, c)

    dx_q, g_q = F.linear_bwd(merge(dqh), q_cache)
    dx_k, g_k = F.linear_bwd(merge(dkh), k_cache)
    dx_v, g_v = F.linear_bwd(merge(dvh), v_cache)
    grads = {
        "wq": g_q["w"], "bq": g_q["b"],
        "wk": g_k["w"], "bk": g_k["b"],
        "wv": g_v["w"], "bv": g_v["b"],
        "wo": g_o["w"], "bo": g_o["b"],
    }
    return dx_q + dx_k + dx_v, grads


# ---------------------------------------------------------------- MLP

def mlp_fwd(x: np.ndarray, params: Params):
    """Linear (C -> 4C), GELU, linear (4C -> C)"""
    if params["w1"].shape[1] != MLP_RATIO * params["w1"].shape[0]:
        raise DomainError(f"MLP hidden width must be {MLP_RATIO}x the embedding")
    h, c1 = F.linear_fwd(x, params["w1"], params["b1"])
    a, cg = F.gelu_fwd(h)
    out, c2 = F.linear_fwd(a, params["w2"], params["b2"])
    return out, (c1, cg, c2)


def mlp_bwd(dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
    c1, cg, c2 = cache
    da, g2 = F.linear_bwd(dout, c2)
    dh = F.gelu_bwd(da, cg)
    dx, g1 = F.linear_bwd(dh, c1)
    return dx, {"w1": g1["w"], "b1": g1["b"], "w2": g2["w"], "b2": g2["b"]}


# ---------------------------------------------------------------- window-attention layer

def swin_layer_fwd(x: np.ndarray, params: Params, heads: int, window: int):
    """
    F_hat = W-Atten(LN(F)) + F, then out = MLP(LN(F_hat)) + F_hat

    Attention runs in non-shifted windows; the per-token LN and MLP are
    evaluated in the same window layout.

    Args:
        x: (C, H, W) features
        params: ln1.*, attn.*, ln2.*, mlp.*

    Returns:
        (C, H, W) output and the cache
    """
    c, h, w = x.shape
    tokens = F.window_partition(x, window)
    y, ln1 = F.layer_norm_fwd(tokens, params["ln1.gamma"], params["ln1.beta"])
    a, attn = w_atten_fwd(y, subset(params, "attn"), heads)
    mid = tokens + a
    z, ln2 = F.layer_norm_fwd(mid, params["ln2.gamma"], params["ln2.beta"])
    m, mlp = mlp_fwd(z, subset(params, "mlp"))
    out = F.window_merge(mid + m, window, h, w)
    return out, (ln1, attn, ln2, mlp, window, h, w)


def swin_layer_bwd(dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
    ln1, attn, ln2, mlp, window, h, w = cache
    dmid = F.window_partition(dout, window)
    dz, g_mlp = mlp_bwd(dmid, mlp)
    dmid_ln, g_ln2 = F.layer_norm_bwd(dz, ln2)
    dmid = dmid + dmid_ln
    dy, g_attn = w_atten_bwd(dmid, attn)
    dtok_ln, g_ln1 = F.layer_norm_bwd(dy, ln1)
    dx = F.window_merge(dmid + dtok_ln, window, h, w)
    grads: Grads = {}
    grads.update(prefixed("ln1", g_ln1))
    grads.update(prefixed("attn", g_attn))
    grads.update(prefixed("ln2", g_ln2))
    grads.update(prefixed("mlp", g_mlp))
    return dx, grads


# ---------------------------------------------------------------- patch embedding and head

def patch_embed_fwd(x: np.ndarray, params: Params, patch: int):
    """
    conv3x3 -> GELU -> conv3x3, then each P x P patch flattened and projected

    Args:
        x: (Cin, H, W) input
        params: conv1.w/b, conv2.w/b, proj.w (stem*P*P, E), proj.b (E,)
        patch: P, must divide H and W

    Returns:
        (E, H/P, W/P) embedding and the cache
    """
    _, h, w = x.shape
    if patch < 1 or h % patch or w % patch:
        raise DomainError(f"patch size {patch} does not divide {h}x{w}")
    s1, c1 = F.conv3x3_fwd(x, params["conv1.w"], params["conv1.b"])
    g1, cg = F.gelu_fwd(s1)
    s2, c2 = F.conv3x3_fwd(g1, params["conv2.w"], params["conv2.b"])
    tokens = F.patchify(s2, patch)
    e, cp = F.linear_fwd(tokens, params["proj.w"], params["proj.b"])
    hp, wp = h // patch, w // patch
    out = e.T.reshape(-1, hp, wp)
    return out, (c1, cg, c2, cp, patch, h, w)


def patch_embed_bwd(dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
    c1, cg, c2, cp, patch, h, w = cache
    de = dout.reshape(dout.shape[0], -1).T
    dtokens, g_p = F.linear_bwd(de, cp)
    ds2 = F.unpatchify(dtokens, patch, h, w)
    dg1, g_c2 = F.conv3x3_bwd(ds2, c2)
    ds1 = F.gelu_bwd(dg1, cg)
    dx, g_c1 = F.conv3x3_bwd(ds1, c1)
    grads: Grads = {}
    grads.update(prefixed("conv1", g_c1))
    grads.update(prefixed("conv2", g_c2))
    grads.update(prefixed("proj", g_p))
    return dx, grads


def unpatch_head_fwd(features: np.ndarray, params: Params, patch: int):
    """
    Project each feature vector to a P x P patch of output pixels

    Args:
        features: (E, Hp, Wp)
        params: w (E, Cout*P*P), b (Cout,) per output channel

    Returns:
        (Cout, Hp*P, Wp*P) image and the cache
    """
    e, hp, wp = features.shape
    tokens = features.reshape(e, -1).T
    zero_bias = np.zeros(params["w"].shape[1], dtype=params["w"].dtype)
    y, cl = F.linear_fwd(tokens, params["w"], zero_bias)
    out = F.unpatchify(y, patch, hp * patch, wp * patch)
    if out.shape[0] != params["b"].shape[0]:
        raise DomainError(f"head bias has {params['b'].shape[0]} channels, output {out.shape[0]}")
    return out + params["b"][:, None, None], (cl, patch, e, hp, wp)


def unpatch_head_bwd(dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
    cl, patch, e, hp, wp = cache
    dy = F.patchify(dout, patch)
    dtokens, g = F.linear_bwd(dy, cl)
    return dtokens.T.reshape(e, hp, wp), {"w": g["w"], "b": dout.sum(axis=(1, 2))}
