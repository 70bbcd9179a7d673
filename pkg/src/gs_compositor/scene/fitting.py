"""Shape-only scene fitting.

Rotation and scale of every Gaussian are optimized against the scene's view
images with positions, colors and opacity frozen. Gradients are central
finite differences. A perturbation of one Gaussian only changes its own
alpha, so the perturbed image is re-evaluated exactly inside that splat's
pixel box from the compositing records of the unperturbed render:

    C' = P + T a' c + R (1 - a') / (1 - a)

where P is the color accumulated in front of the splat, T its
transmittance and R the contribution of everything behind it.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import structlog

from ..config.constants import FD_STEP, TRANSMITTANCE_MIN
from ..core.errors import DomainError, NumericalError
from ..core.logging import ContextLogger
from ..nn.optim import adamw_step
from ..nn.params import ModelParams
from ..render.rasterizer import (
    ProjectedSplats, SplatRecord, composite, conics, project_covariances, project_scene,
    splat_alpha,
)
from .camera import CameraView
from .gaussians import GaussianScene, covariances

logger = structlog.get_logger()

# 4 quaternion + 3 log-scale coordinates, each perturbed by +h and -h
_N_COORDS = 7

# smaller loss changes are rounding noise, not progress
_MIN_IMPROVEMENT = 1e-12


@dataclass
class FitResult:
    scene: GaussianScene
    losses: List[float]       # loss before the first step, then after each step
    best_iteration: int

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[self.best_iteration]


@dataclass
class _ViewPass:
    view: CameraView
    target: np.ndarray                 # (3, H, W) float64
    splats: ProjectedSplats
    image: np.ndarray                  # (3, H, W) float64 render
    records: List[SplatRecord]

    @property
    def pixel_count(self) -> int:
        return self.image.size


def _render_pass(scene: GaussianScene, view: CameraView, target: np.ndarray) -> _ViewPass:
    splats = project_scene(scene, view)
    image, records = composite(
        splats, scene.color, scene.opacity, view.height, view.width, record="full"
    )
    return _ViewPass(view, target, splats, image, records)


def _mean_mse(passes: Sequence[_ViewPass]) -> float:
    return float(np.mean([np.mean((p.image - p.target) ** 2) for p in passes]))


def _perturbations(rot: np.ndarray, log_scale: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """(14, 4) quaternions and (14, 3) scales: +h then -h for each of the 7 coordinates"""
    base = np.concatenate([rot, log_scale])
    steps = np.concatenate([np.eye(_N_COORDS), -np.eye(_N_COORDS)]) * h
    coords = base[None, :] + steps
    return coords[:, :4], np.exp(coords[:, 4:])


def _shape_gradient(
        scene: GaussianScene,
        log_scale: np.ndarray,
        passes: Sequence[_ViewPass],
        h: float,
) -> np.ndarray:
    """(M, 7) central-difference gradient of the mean view MSE"""
    grad = np.zeros((scene.size, _N_COORDS))
    n_views = len(passes)
    for vp in passes:
        slot = {int(g): k for k, g in enumerate(vp.splats.source)}
        norm = 1.0 / (vp.pixel_count * n_views * 2.0 * h)
        for rec in vp.records:
            g = rec.gaussian
            k = slot[g]
            rot_p, scale_p = _perturbations(scene.rot[g], log_scale[g], h)
            cov2d = project_covariances(vp.splats.jacobian[k], covariances(rot_p, scale_p))
            conic = conics(cov2d)
            if not np.all(np.isfinite(conic)):
                raise NumericalError("singular 2D covariance under perturbation", gaussian=g)
            alpha = splat_alpha(conic, vp.splats.mean2d[k], float(scene.opacity[g]), rec.rows, rec.cols)
            alpha = np.where(rec.transmittance >= TRANSMITTANCE_MIN, alpha, 0.0)

            color = scene.color[g][:, None, None]
            final = vp.image[:, rec.rows, rec.cols]
            target = vp.target[:, rec.rows, rec.cols]
            behind = final - rec.accumulated - rec.weight[None] * color
            carry = (1.0 - alpha) / (1.0 - rec.alpha)[None]
            perturbed = (
                rec.accumulated[None]
                + (rec.transmittance[None] * alpha)[:, None] * color[None]
                + behind[None] * carry[:, None]
            )
            sq = np.sum((perturbed - target[None]) ** 2, axis=(1, 2, 3))
            grad[g] += (sq[:_N_COORDS] - sq[_N_COORDS:]) * norm
    return grad


def fit_shape(
        scene: GaussianScene,
        iters: int,
        lr: float,
        fd_step: float = FD_STEP,
) -> FitResult:
    """
    Optimize rotations and scales to match the scene's view images

    Args:
        scene: scene with views carrying the target images
        iters: number of optimizer steps (>= 1)
        lr: AdamW learning rate on quaternions and log-scales
        fd_step: central-difference step

    Returns:
        FitResult with the lowest-loss scene seen and the per-step loss trace
    """
    if iters < 1:
        raise DomainError(f"iters must be >= 1, got {iters}")
    if not scene.views:
        raise DomainError("fit_shape needs a scene with views")
    targets = [view.image.astype(np.float64) for view in scene.views]

    params = ModelParams({
        "rot": scene.rot.copy(),
        "log_scale": np.log(scene.scale),
    })
    current = scene
    passes = [_render_pass(current, v, t) for v, t in zip(scene.views, targets)]
    losses = [_mean_mse(passes)]
    if not np.isfinite(losses[0]):
        raise NumericalError("non-finite loss", iteration=0)
    best_scene, best_iteration = current, 0

    with ContextLogger("fit_shape", gaussians=scene.size, views=len(scene.views), iters=iters):
        for it in range(1, iters + 1):
            d_shape = _shape_gradient(current, params["log_scale"], passes, fd_step)
            adamw_step(
                params, {"rot": d_shape[:, :4], "log_scale": d_shape[:, 4:]},
                lr=lr, weight_decay=0.0,
            )
            rot = params["rot"]
            params["rot"] = rot / np.linalg.norm(rot, axis=1, keepdims=True)

            current = current.with_shape(params["rot"], np.exp(params["log_scale"]))
            passes = [_render_pass(current, v, t) for v, t in zip(scene.views, targets)]
            loss = _mean_mse(passes)
            if not np.isfinite(loss):
                raise NumericalError("non-finite loss", iteration=it)
            losses.append(loss)
            if loss < losses[best_iteration] - _MIN_IMPROVEMENT:
                best_scene, best_iteration = current, it
            logger.debug("fit_shape step", iteration=it, loss=loss)

        logger.info(
            "Shape fitting finished",
            initial_loss=losses[0], final_loss=losses[best_iteration], best_iteration=best_iteration,
        )
    return FitResult(scene=best_scene, losses=losses, best_iteration=best_iteration)
