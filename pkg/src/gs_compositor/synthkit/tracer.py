"""Vectorized ray tracer for analytic scenes with Lambertian shading and hard shadows"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..config.constants import RAY_EPSILON, SHADOW_BIAS, SKY_COLOR
from ..core.errors import DomainError
from ..scene.camera import Camera, CameraView
from .scene import AnalyticScene, Lighting, Sphere


@dataclass(frozen=True)
class RenderedView:
    """
    Traced view, channel-first float32

    image/background (3, H, W) unclamped radiance, depth (1, H, W) camera z
    with 0 on sky pixels, mask (1, H, W) marking foreground hits.
    """
    camera: Camera
    image: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    background: np.ndarray

    def to_camera_view(self, image: Optional[np.ndarray] = None) -> CameraView:
        return CameraView(
            camera=self.camera,
            image=np.clip(self.image if image is None else image, 0.0, 1.0),
            depth=self.depth,
            background=np.clip(self.background, 0.0, 1.0),
            mask=self.mask,
        )


def _sphere_hits(origins: np.ndarray, dirs: np.ndarray, sphere: Sphere) -> np.ndarray:
    """Nearest positive ray parameter per ray, inf on a miss"""
    oc = origins - np.asarray(sphere.center)
    a = np.einsum("...k,...k->...", dirs, dirs)
    b = 2.0 * np.einsum("...k,...k->...", dirs, oc)
    c = np.einsum("...k,...k->...", oc, oc) - sphere.radius ** 2
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    root = np.sqrt(np.where(hit, disc, 0.0))
    near = (-b - root) / (2.0 * a)
    far = (-b + root) / (2.0 * a)
    t = np.where(near > RAY_EPSILON, near, far)
    return np.where(hit & (t > RAY_EPSILON), t, np.inf)


def _plane_hits(origins: np.ndarray, dirs: np.ndarray, height: float) -> np.ndarray:
    dy = dirs[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (height - origins[..., 1]) / dy
    return np.where((np.abs(dy) > RAY_EPSILON) & (t > RAY_EPSILON), t, np.inf)


def _occluded(points: np.ndarray, to_light: np.ndarray, spheres: Sequence[Sphere]) -> np.ndarray:
    """True where a sphere blocks the segment point -> light (t in (0, 1))"""
    blocked = np.zeros(points.shape[:-1], dtype=bool)
    for sphere in spheres:
        blocked |= _sphere_hits(points, to_light, sphere) < 1.0
    return blocked


def _shade(
        points: np.ndarray,
        normals: np.ndarray,
        albedo: np.ndarray,
        lighting: Lighting,
        spheres: Sequence[Sphere],
) -> np.ndarray:
    to_light = np.asarray(lighting.position) - points
    dist2 = np.einsum("...k,...k->...", to_light, to_light)
    cos = np.einsum("...k,...k->...", normals, to_light) / np.sqrt(dist2)
    lit = ~_occluded(points + SHADOW_BIAS * normals, to_light, spheres)
    direct = np.maximum(cos, 0.0) / dist2 * lit
    return albedo * (
        np.asarray(lighting.ambient) + np.asarray(lighting.intensity) * direct[..., None]
    )


def _trace(
        origin: np.ndarray,
        dirs: np.ndarray,
        scene: AnalyticScene,
        lighting: Lighting,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(H, W, 3) radiance, (H, W) ray parameter (inf on sky), (H, W) hit index (-1 plane, -2 sky)"""
    origins = np.broadcast_to(origin, dirs.shape)
    t_best = _plane_hits(origins, dirs, scene.plane_height)
    index = np.where(np.isfinite(t_best), -1, -2)
    for k, sphere in enumerate(scene.spheres):
        t = _sphere_hits(origins, dirs, sphere)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        index = np.where(closer, k, index)

    radiance = np.broadcast_to(np.asarray(SKY_COLOR, dtype=np.float64), dirs.shape).copy()
    hit = index > -2
    if np.any(hit):
        points = origins[hit] + t_best[hit][:, None] * dirs[hit]
        normals = np.zeros_like(points)
        albedo = np.empty_like(points)
        which = index[hit]
        on_plane = which == -1
        normals[on_plane] = (0.0, 1.0, 0.0)
        albedo[on_plane] = scene.plane_albedo
        for k, sphere in enumerate(scene.spheres):
            sel = which == k
            if np.any(sel):
                normals[sel] = (points[sel] - np.asarray(sphere.center)) / sphere.radius
                albedo[sel] = sphere.albedo
        radiance[hit] = _shade(points, normals, albedo, lighting, scene.spheres)
    return radiance, t_best, index


def raytrace(scene: AnalyticScene, camera: Camera, lighting: Optional[Lighting] = None) -> RenderedView:
    """
    Trace one view of ``scene`` under ``lighting`` (the scene's own light by default)

    The background image re-traces the scene with its foreground spheres
    removed, so it carries neither their radiance nor their shadows.
    """
    lighting = scene.lighting if lighting is None else lighting
    dirs = camera.pixel_rays()
    origin = camera.center
    radiance, t, index = _trace(origin, dirs, scene, lighting)
    background, _, _ = _trace(origin, dirs, scene.without_foreground(), lighting)

    fg_ids = [k for k, s in enumerate(scene.spheres) if s.foreground]
    mask = np.isin(index, fg_ids)
    # rays carry unit camera z, so the ray parameter is the depth
    depth = np.where(np.isfinite(t), t, 0.0)

    def channels_first(a: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(a.transpose(2, 0, 1), dtype=np.float32)

    return RenderedView(
        camera=camera,
        image=channels_first(radiance),
        depth=depth[None].astype(np.float32),
        mask=mask[None].astype(np.float32),
        background=channels_first(background),
    )


def composite_mix(fg_view: RenderedView, bg_view: RenderedView) -> np.ndarray:
    """
    Paste the foreground of ``fg_view`` over ``bg_view``: mask * A + (1 - mask) * B

    Both views must share camera and mask (same geometry, different lighting).
    """
    if not fg_view.camera.same_as(bg_view.camera):
        raise DomainError("composite_mix needs views from the same camera")
    if not np.array_equal(fg_view.mask, bg_view.mask):
        raise DomainError("composite_mix needs identical foreground masks")
    mask = fg_view.mask
    return (mask * fg_view.image + (1.0 - mask) * bg_view.image).astype(np.float32)
