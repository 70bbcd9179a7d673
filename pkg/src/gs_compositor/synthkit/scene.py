"""Analytic desk-scale scenes: spheres resting on a ground plane under a point light.

World space is y-up with the ground plane at y = 0. Cameras orbit the
scene center at constant elevation.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import structlog

from ..config.constants import MAX_PLACEMENT_ATTEMPTS
from ..core.errors import CapacityError, DomainError
from ..core.utils import make_rng
from ..scene.camera import Camera

logger = structlog.get_logger()

# placement disks (xz radius) for foreground and background spheres
FG_PLACEMENT_RADIUS = 0.6
BG_PLACEMENT_RADIUS = 1.3
FG_RADIUS_RANGE = (0.25, 0.45)
BG_RADIUS_RANGE = (0.2, 0.4)
ALBEDO_RANGE = (0.2, 0.9)
LIGHT_DISTANCE = 5.0
LIGHT_MIN_ELEVATION_DEG = 25.0
INTENSITY_RANGE = (12.0, 30.0)
AMBIENT_RANGE = (0.04, 0.15)


def _vec(values: Sequence[float]) -> Tuple[float, float, float]:
    x, y, z = (float(v) for v in values)
    return (x, y, z)


@dataclass(frozen=True)
class Sphere:
    center: Tuple[float, float, float]
    radius: float
    albedo: Tuple[float, float, float]
    foreground: bool = False

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError(f"sphere radius must be positive, got {self.radius}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "center": list(self.center), "radius": self.radius,
            "albedo": list(self.albedo), "foreground": self.foreground,
        }


@dataclass(frozen=True)
class Lighting:
    """Point light position and RGB intensity plus ambient RGB"""
    position: Tuple[float, float, float]
    intensity: Tuple[float, float, float]
    ambient: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.intensity) < 0 or min(self.ambient) < 0:
            raise DomainError("light intensities must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "position": list(self.position), "intensity": list(self.intensity),
            "ambient": list(self.ambient),
        }


@dataclass(frozen=True)
class AnalyticScene:
    spheres: Tuple[Sphere, ...]
    lighting: Lighting
    plane_height: float = 0.0
    plane_albedo: Tuple[float, float, float] = (0.6, 0.6, 0.6)

    @property
    def foreground(self) -> List[Sphere]:
        return [s for s in self.spheres if s.foreground]

    def without_foreground(self) -> "AnalyticScene":
        return AnalyticScene(
            spheres=tuple(s for s in self.spheres if not s.foreground),
            lighting=self.lighting, plane_height=self.plane_height,
            plane_albedo=self.plane_albedo,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "plane": {"height": self.plane_height, "albedo": list(self.plane_albedo)},
            "spheres": [s.to_dict() for s in self.spheres],
            "lighting": self.lighting.to_dict(),
        }


def sample_lighting(rng: np.random.Generator) -> Lighting:
    """Point light on the upper hemisphere with a tinted intensity and ambient term"""
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    elevation = math.radians(rng.uniform(LIGHT_MIN_ELEVATION_DEG, 80.0))
    position = LIGHT_DISTANCE * np.array([
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
        math.cos(elevation) * math.cos(azimuth),
    ])
    tint = rng.uniform(0.6, 1.0, size=3)
    intensity = rng.uniform(*INTENSITY_RANGE) * tint / tint.max()
    ambient = rng.uniform(*AMBIENT_RANGE) * rng.uniform(0.7, 1.0, size=3)
    return Lighting(position=_vec(position), intensity=_vec(intensity), ambient=_vec(ambient))


def _place(
        rng: np.random.Generator,
        placed: List[Sphere],
        disk: float,
        radius_range: Tuple[float, float],
        foreground: bool,
) -> Sphere:
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        radius = rng.uniform(*radius_range)
        r = disk * math.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * math.pi)
        center = np.array([r * math.cos(theta), radius, r * math.sin(theta)])
        if all(
                np.linalg.norm(center - np.asarray(s.center)) >= radius + s.radius
                for s in placed
        ):
            albedo = rng.uniform(*ALBEDO_RANGE, size=3)
            return Sphere(_vec(center), float(radius), _vec(albedo), foreground)
    raise CapacityError(
        f"could not place sphere {len(placed) + 1} after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )


def make_scene(seed: int, n_fg: int, n_bg: int) -> AnalyticScene:
    """
    Seeded random scene: non-overlapping spheres resting on the plane

    Foreground spheres are placed near the center first, background spheres
    around them. Raises CapacityError when a sphere cannot be placed.
    """
    if n_fg < 1:
        raise DomainError(f"a composite scene needs at least one foreground sphere, got {n_fg}")
    if n_bg < 0:
        raise DomainError(f"n_bg must be >= 0, got {n_bg}")
    rng = make_rng(seed, 0)
    placed: List[Sphere] = []
    for _ in range(n_fg):
        placed.append(_place(rng, placed, FG_PLACEMENT_RADIUS, FG_RADIUS_RANGE, True))
    for _ in range(n_bg):
        placed.append(_place(rng, placed, BG_PLACEMENT_RADIUS, BG_RADIUS_RANGE, False))
    plane_albedo = _vec(rng.uniform(0.4, 0.8, size=3))
    lighting = sample_lighting(make_rng(seed, 1))
    logger.debug("Scene sampled", seed=seed, n_fg=n_fg, n_bg=n_bg)
    return AnalyticScene(spheres=tuple(placed), lighting=lighting, plane_albedo=plane_albedo)


def orbit_azimuths(n_views: int, offset_deg: float = 0.0) -> List[float]:
    return [offset_deg + 360.0 * k / n_views for k in range(n_views)]


def orbit_camera(
        azimuth_deg: float,
        radius: float,
        elevation_deg: float,
        image_size: int,
        fov_deg: float,
        target_height: float = 0.0,
) -> Camera:
    """Camera on the orbit circle looking at (0, target_height, 0); azimuth 0 sits on +z"""
    az, el = math.radians(azimuth_deg), math.radians(elevation_deg)
    target = np.array([0.0, target_height, 0.0])
    eye = target + radius * np.array([
        math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az),
    ])
    return Camera.look_at(eye, target, image_size, image_size, fov_deg)


def orbit_cameras(
        n_views: int,
        radius: float,
        elevation_deg: float,
        image_size: int,
        fov_deg: float,
        target_height: float = 0.0,
        offset_deg: float = 0.0,
) -> List[Camera]:
    """
    ``n_views`` cameras at uniform azimuths

    A non-zero ``offset_deg`` (e.g. half the spacing) gives held-out views
    interleaved with a training orbit.
    """
    if n_views < 1:
        raise DomainError(f"n_views must be >= 1, got {n_views}")
    return [
        orbit_camera(az, radius, elevation_deg, image_size, fov_deg, target_height)
        for az in orbit_azimuths(n_views, offset_deg)
    ]
