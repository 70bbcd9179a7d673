"""Gaussian splatting rasterizer.

Gaussians are projected with the pinhole Jacobian into 2D splats and
alpha-composited front to back:

    C(x) = sum_i T_i * alpha_i * c_i,    T_i = prod_{j<i} (1 - alpha_j)

with alpha_i = min(opacity_i * exp(-q/2), 0.99) for Mahalanobis distance
q <= 9 and zero beyond. A pixel stops accumulating once T < 1e-4. Splats
are sorted globally by camera depth (ties by Gaussian index), which is the
per-pixel depth order of the splats covering any pixel.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from ..config.constants import (
    ALPHA_MAX, COV2D_REGULARIZATION, MAHALANOBIS_CUTOFF, TRANSMITTANCE_MIN, ZNEAR,
)
from ..core.errors import DomainError, NumericalError
from ..scene.camera import Camera, CameraView
from ..scene.gaussians import GaussianPrimitive, GaussianScene, covariance

CameraLike = Union[Camera, CameraView]


def _camera(view: CameraLike) -> Camera:
    return view.camera if isinstance(view, CameraView) else view


@dataclass(frozen=True)
class Splat2D:
    """Projected Gaussian; ``cov2d`` is unregularized (pixel^2)"""
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    source: int


@dataclass(frozen=True)
class ProjectedSplats:
    """Batched projection of the visible Gaussians of a scene"""
    source: np.ndarray    # (K,) Gaussian index
    mean2d: np.ndarray    # (K, 2) pixel (u, v)
    cov2d: np.ndarray     # (K, 2, 2) unregularized
    depth: np.ndarray     # (K,)
    jacobian: np.ndarray  # (K, 2, 3) J W, maps world covariance to pixels

    @property
    def count(self) -> int:
        return self.source.shape[0]

    def draw_order(self) -> np.ndarray:
        """Indices into the splats, ascending depth then Gaussian index"""
        return np.lexsort((self.source, self.depth))


def project_covariances(jacobian: np.ndarray, cov3d: np.ndarray) -> np.ndarray:
    """(..., 2, 3) J W and (..., 3, 3) world covariances -> (..., 2, 2) J W Sigma W^T J^T"""
    return jacobian @ cov3d @ np.swapaxes(jacobian, -1, -2)


def project_arrays(
        mu: np.ndarray, cov3d: np.ndarray, camera: Camera
) -> ProjectedSplats:
    """Project (M, 3) centers with (M, 3, 3) covariances; culls z <= znear"""
    cam = camera.to_camera_space(mu)
    keep = np.nonzero(cam[:, 2] > ZNEAR)[0]
    x, y, z = cam[keep, 0], cam[keep, 1], cam[keep, 2]
    mean2d = np.stack([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy], axis=1)
    jac = np.zeros((keep.size, 2, 3))
    jac[:, 0, 0] = camera.fx / z
    jac[:, 0, 2] = -camera.fx * x / (z * z)
    jac[:, 1, 1] = camera.fy / z
    jac[:, 1, 2] = -camera.fy * y / (z * z)
    jw = jac @ camera.rotation
    return ProjectedSplats(
        source=keep.astype(np.int64), mean2d=mean2d,
        cov2d=project_covariances(jw, cov3d[keep]), depth=z, jacobian=jw,
    )


def project_scene(scene: GaussianScene, view: CameraLike) -> ProjectedSplats:
    return project_arrays(scene.mu, scene.covariances(), _camera(view))


def project(prim: GaussianPrimitive, view: CameraLike) -> Optional[Splat2D]:
    """Project one primitive; returns None when it is culled"""
    splats = project_arrays(
        np.asarray(prim.mu, dtype=np.float64)[None], covariance(prim)[None], _camera(view)
    )
    if splats.count == 0:
        return None
    return Splat2D(
        mean2d=splats.mean2d[0], cov2d=splats.cov2d[0],
        depth=float(splats.depth[0]), source=0,
    )


def conics(cov2d: np.ndarray) -> np.ndarray:
    """
    Inverse regularized covariances as (..., 3) rows (a, b, c) of [[a, b], [b, c]]

    Rows of singular or non-finite covariances come back as NaN.
    """
    cov = cov2d + COV2D_REGULARIZATION * np.eye(2)
    a, b, c = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 1]
    det = a * c - b * b
    det = np.where(np.isfinite(det) & (det > 0), det, np.nan)
    return np.stack([c / det, -b / det, a / det], axis=-1)


def _conics(splats: ProjectedSplats) -> np.ndarray:
    result = conics(splats.cov2d)
    bad = ~np.all(np.isfinite(result), axis=1)
    if np.any(bad):
        raise NumericalError("singular 2D covariance", gaussian=int(splats.source[np.argmax(bad)]))
    return result


def _radii(splats: ProjectedSplats) -> np.ndarray:
    cov = splats.cov2d + COV2D_REGULARIZATION * np.eye(2)
    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - (a * c - b * b), 0.0))
    return MAHALANOBIS_CUTOFF * np.sqrt(lam_max)


@dataclass
class SplatRecord:
    """Per-splat state captured during compositing, over the splat's pixel box"""
    gaussian: int
    rows: slice
    cols: slice
    alpha: np.ndarray                     # (h, w) alpha actually applied
    transmittance: np.ndarray             # (h, w) T before this splat
    accumulated: Optional[np.ndarray]     # (3, h, w) color before this splat

    @property
    def weight(self) -> np.ndarray:
        return self.transmittance * self.alpha


def splat_alpha(
        conic: np.ndarray, mean: np.ndarray, opacity: float, rows: slice, cols: slice
) -> np.ndarray:
    """
    Clamped alpha of a splat over a pixel box, zero beyond the cutoff radius

    ``conic`` is a (3,) row or a (B, 3) batch of variants of the same splat;
    the result is (h, w) or (B, h, w) accordingly.
    """
    conic = np.asarray(conic, dtype=np.float64)
    v = np.arange(rows.start, rows.stop, dtype=np.float64)[:, None] - mean[1]
    u = np.arange(cols.start, cols.stop, dtype=np.float64)[None, :] - mean[0]
    a, b, c = (conic[..., i, None, None] for i in range(3))
    q = a * u * u + 2.0 * b * u * v + c * v * v
    alpha = np.minimum(opacity * np.exp(-0.5 * q), ALPHA_MAX)
    return np.where(q <= MAHALANOBIS_CUTOFF ** 2, alpha, 0.0)


def _pixel_box(mean: np.ndarray, radius: float, height: int, width: int):
    # one extra pixel of margin so perturbed footprints stay inside the box
    r = radius + 1.0
    c0 = max(int(math.floor(mean[0] - r)), 0)
    c1 = min(int(math.ceil(mean[0] + r)) + 1, width)
    r0 = max(int(math.floor(mean[1] - r)), 0)
    r1 = min(int(math.ceil(mean[1] + r)) + 1, height)
    if c0 >= c1 or r0 >= r1:
        return None
    return slice(r0, r1), slice(c0, c1)


def composite(
        splats: ProjectedSplats,
        colors: np.ndarray,
        opacities: np.ndarray,
        height: int,
        width: int,
        record: Optional[str] = None,
):
    """
    Front-to-back compositing of projected splats

    Args:
        splats: projected splats (``source`` indexes ``colors``/``opacities``)
        colors: (M, 3) Gaussian colors
        opacities: (M,) Gaussian opacities
        height, width: image size
        record: None, ``"weights"`` (alpha and T per splat) or ``"full"``
            (additionally the color accumulated in front of each splat)

    Returns:
        (3, H, W) float64 image and the list of :class:`SplatRecord`
    """
    image = np.zeros((3, height, width))
    transmittance = np.ones((height, width))
    records: List[SplatRecord] = []
    if splats.count == 0:
        return image, records

    conics = _conics(splats)
    radii = _radii(splats)
    for k in splats.draw_order():
        box = _pixel_box(splats.mean2d[k], radii[k], height, width)
        if box is None:
            continue
        rows, cols = box
        g = int(splats.source[k])
        t_box = transmittance[rows, cols]
        alpha = splat_alpha(conics[k], splats.mean2d[k], float(opacities[g]), rows, cols)
        alpha = np.where(t_box >= TRANSMITTANCE_MIN, alpha, 0.0)
        if record is not None:
            records.append(SplatRecord(
                gaussian=g, rows=rows, cols=cols, alpha=alpha,
                transmittance=t_box.copy(),
                accumulated=image[:, rows, cols].copy() if record == "full" else None,
            ))
        image[:, rows, cols] += (t_box * alpha)[None] * colors[g][:, None, None]
        transmittance[rows, cols] = t_box * (1.0 - alpha)
    return image, records


def render(scene: GaussianScene, view: CameraLike, dtype=np.float32) -> np.ndarray:
    """(3, H, W) render over a black background; float32 unless ``dtype`` says otherwise"""
    camera = _camera(view)
    image, _ = composite(
        project_scene(scene, camera), scene.color, scene.opacity, camera.height, camera.width
    )
    return image.astype(dtype, copy=False)


def render_reference(scene: GaussianScene, view: CameraLike) -> np.ndarray:
    """
    Cutoff-free render used as a test oracle

    Every visible splat is evaluated at every pixel, with no radius cutoff
    and no early termination; transmittance comes from a cumulative product
    over the depth-sorted stack.
    """
    camera = _camera(view)
    splats = project_scene(scene, camera)
    if splats.count == 0:
        return np.zeros((3, camera.height, camera.width), dtype=np.float32)
    order = splats.draw_order()
    cov = splats.cov2d[order] + COV2D_REGULARIZATION * np.eye(2)
    inv = np.linalg.inv(cov)
    v, u = np.mgrid[0:camera.height, 0:camera.width].astype(np.float64)
    d = np.stack([u, v], axis=-1)[None] - splats.mean2d[order][:, None, None, :]
    q = np.einsum("khwi,kij,khwj->khw", d, inv, d)
    sources = splats.source[order]
    alpha = np.minimum(scene.opacity[sources][:, None, None] * np.exp(-0.5 * q), ALPHA_MAX)
    survive = np.cumprod(1.0 - alpha, axis=0)
    before = np.concatenate([np.ones_like(survive[:1]), survive[:-1]], axis=0)
    weights = before * alpha
    image = np.einsum("khw,kc->chw", weights, scene.color[sources])
    return image.astype(np.float32)


def color_backward(
        scene: GaussianScene, view: CameraLike, d_loss_d_pixels: np.ndarray
) -> np.ndarray:
    """
    Exact gradient of a loss w.r.t. Gaussian colors

    The render is linear in the colors with per-pixel weight T_i * alpha_i,
    so dL/dc_i = sum over pixels of T_i * alpha_i * dL/dC.

    Returns:
        (M, 3) gradient
    """
    camera = _camera(view)
    grad_pixels = np.asarray(d_loss_d_pixels, dtype=np.float64)
    if grad_pixels.shape != (3, camera.height, camera.width):
        raise DomainError(
            f"pixel gradient has shape {grad_pixels.shape}, "
            f"expected {(3, camera.height, camera.width)}"
        )
    grads = np.zeros((scene.size, 3))
    _, records = composite(
        project_scene(scene, camera), scene.color, scene.opacity,
        camera.height, camera.width, record="weights",
    )
    for rec in records:
        grads[rec.gaussian] += np.einsum(
            "hw,chw->c", rec.weight, grad_pixels[:, rec.rows, rec.cols]
        )
    return grads


def compositing_weights(scene: GaussianScene, view: CameraLike) -> List[SplatRecord]:
    """Per-splat compositing records (alpha, T) of a render, in draw order"""
    camera = _camera(view)
    _, records = composite(
        project_scene(scene, camera), scene.color, scene.opacity,
        camera.height, camera.width, record="weights",
    )
    return records
