# src/gs_compositor/losses/losses.py
"""Training losses with analytic gradients.

loss_2d: MSE + lambda * perceptual on the harmonized image.
loss_3d: beta-weighted blend of a grid-space term on the predicted color
grid and a render term that decodes the grid back onto the Gaussians and
compares renders with the ground-truth views.
"""

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from ..config.constants import PERCEPTUAL_MIN_SIDE
from ..config.settings import LossWeights
from ..core.errors import DomainError
from ..render.rasterizer import color_backward, render
from ..scene.camera import CameraView
from ..scene.gaussians import GaussianScene
from ..serialization.mapping import GridMapping, psi, psi_inverse
from .perceptual import features_bwd, features_fwd


@dataclass
class LossResult:
    """Scalar loss, its gradient w.r.t. the prediction and the named terms"""
    value: float
    grad: np.ndarray
    terms: Dict[str, float] = field(default_factory=dict)


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if np.shape(a) != np.shape(b):
        raise DomainError(f"{what}: shapes {np.shape(a)} and {np.shape(b)} differ")


def mse_loss(a: np.ndarray, b: np.ndarray) -> LossResult:
    """Mean squared difference; gradient 2 (a - b) / N w.r.t. ``a``"""
    _check_same_shape(a, b, "mse_loss")
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    value = float(np.mean(diff * diff))
    return LossResult(value=value, grad=2.0 * diff / diff.size, terms={"mse": value})


def perceptual_loss(a: np.ndarray, b: np.ndarray) -> LossResult:
    """Mean over pyramid levels of the feature MSE; gradient w.r.t. ``a``"""
    _check_same_shape(a, b, "perceptual_loss")
    feats_a, caches = features_fwd(a)
    feats_b, _ = features_fwd(b)
    n_levels = len(feats_a)
    value = 0.0
    d_feats = []
    for fa, fb in zip(feats_a, feats_b):
        diff = fa - fb
        value += float(np.mean(diff * diff)) / n_levels
        d_feats.append(2.0 * diff / (diff.size * n_levels))
    return LossResult(value=value, grad=features_bwd(d_feats, caches), terms={"perceptual": value})


def _image_loss(pred: np.ndarray, target: np.ndarray, lam: float, perceptual: bool) -> LossResult:
    mse = mse_loss(pred, target)
    if lam == 0.0 or not perceptual:
        return mse
    lp = perceptual_loss(pred, target)
    return LossResult(
        value=mse.value + lam * lp.value,
        grad=mse.grad + lam * lp.grad,
        terms={"mse": mse.value, "perceptual": lp.value},
    )


def loss_2d(h_hat: np.ndarray, h: np.ndarray, weights: LossWeights) -> LossResult:
    """L_mse(H_hat, H) + lambda * L_p(H_hat, H)"""
    return _image_loss(h_hat, h, weights.lam, perceptual=True)


def loss_3d(
        grid_hat: np.ndarray,
        colors_gt: np.ndarray,
        scene: GaussianScene,
        views: Sequence[CameraView],
        mapping: GridMapping,
        weights: LossWeights,
) -> LossResult:
    """
    Blend of the grid-space loss and the mean render loss over ``views``

    The grid term compares ``grid_hat`` with psi(colors_gt) and adds the
    perceptual term only when the grid side is at least 8. The render term
    installs psi_inverse(grid_hat) as the scene colors, unclamped, renders
    every view and compares with the view images; its gradient flows back
    through color_backward and psi.

    Returns:
        LossResult with the gradient w.r.t. ``grid_hat``
    """
    colors_gt = np.asarray(colors_gt, dtype=np.float64)
    if mapping.m_count != scene.size or colors_gt.shape != (scene.size, 3):
        raise DomainError(
            f"mapping for {mapping.m_count} Gaussians, scene has {scene.size}, "
            f"colors {colors_gt.shape}"
        )
    expected = (3, mapping.side, mapping.side)
    if np.shape(grid_hat) != expected:
        raise DomainError(f"predicted grid has shape {np.shape(grid_hat)}, expected {expected}")
    beta = weights.beta
    grid_hat = np.asarray(grid_hat, dtype=np.float64)
    value = 0.0
    grad = np.zeros_like(grid_hat)
    terms: Dict[str, float] = {}

    if beta > 0.0:
        grid_term = _image_loss(
            grid_hat, psi(colors_gt, mapping), weights.lam,
            perceptual=mapping.side >= PERCEPTUAL_MIN_SIDE,
        )
        value += beta * grid_term.value
        grad += beta * grid_term.grad
        terms["grid"] = grid_term.value

    if beta < 1.0:
        if not views:
            raise DomainError("the render term needs at least one view")
        predicted = scene.with_colors(psi_inverse(grid_hat, mapping))
        d_colors = np.zeros((scene.size, 3))
        render_total = 0.0
        for view in views:
            image = render(predicted, view, dtype=np.float64)
            view_term = _image_loss(image, view.image, weights.lam, perceptual=True)
            render_total += view_term.value
            d_colors += color_backward(predicted, view, view_term.grad)
        scale = (1.0 - beta) / len(views)
        value += scale * render_total
        grad += psi(scale * d_colors, mapping)
        terms["render"] = render_total / len(views)

    terms["total"] = value
    return LossResult(value=value, grad=grad, terms=terms)
