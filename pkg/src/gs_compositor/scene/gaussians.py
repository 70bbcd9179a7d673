"""Gaussian primitives, covariance assembly, point maps and scene initialization"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.spatial import cKDTree

from ..config.constants import MIN_SCALE, QUATERNION_TOLERANCE, SINGLE_POINT_SCALE
from ..core.errors import CapacityError, DomainError
from ..core.utils import make_rng
from .camera import Camera, CameraView

logger = structlog.get_logger()


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """(..., 4) quaternions (w, x, y, z) -> (..., 3, 3) rotation matrices; q is normalized first"""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
    ], axis=-2)


def covariances(rot: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Batched R S S^T R^T for (M, 4) quaternions and (M, 3) scales"""
    r = quaternion_to_rotation(rot)
    rs = r * np.asarray(scale, dtype=np.float64)[..., None, :]
    return rs @ np.swapaxes(rs, -1, -2)


@dataclass(frozen=True)
class GaussianPrimitive:
    """One Gaussian: position, orientation, axis scales, opacity, color, source pixel"""
    mu: Tuple[float, float, float]
    rot: Tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    scale: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    opacity: float = 1.0
    color: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    provenance: Tuple[int, int, int] = (0, 0, 0)


def covariance(prim: GaussianPrimitive) -> np.ndarray:
    """3x3 covariance R S S^T R^T of a primitive with a unit quaternion"""
    q = np.asarray(prim.rot, dtype=np.float64)
    if abs(np.linalg.norm(q) - 1.0) > QUATERNION_TOLERANCE:
        raise DomainError(f"quaternion {prim.rot} is not unit length")
    scale = np.asarray(prim.scale, dtype=np.float64)
    if np.any(scale <= 0):
        raise DomainError(f"scales must be positive, got {prim.scale}")
    return covariances(q[None], scale[None])[0]


def _frozen(array: Any, dtype, shape: Tuple[int, ...]) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True).reshape(shape)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class GaussianScene:
    """
    M Gaussians stored as parallel arrays, plus the views they came from

    Arrays: mu (M, 3), rot (M, 4), scale (M, 3), opacity (M,), color (M, 3),
    provenance (M, 3) as (view, row, col). Instances are immutable; the
    ``with_*`` methods return modified copies.
    """
    mu: np.ndarray
    rot: np.ndarray
    scale: np.ndarray
    opacity: np.ndarray
    color: np.ndarray
    provenance: np.ndarray
    views: Tuple[CameraView, ...] = field(default=())

    def __post_init__(self):
        m = np.asarray(self.mu).reshape(-1, 3).shape[0]
        if m < 1:
            raise DomainError("a scene needs at least one Gaussian")
        object.__setattr__(self, "mu", _frozen(self.mu, np.float64, (m, 3)))
        object.__setattr__(self, "rot", _frozen(self.rot, np.float64, (m, 4)))
        object.__setattr__(self, "scale", _frozen(self.scale, np.float64, (m, 3)))
        object.__setattr__(self, "opacity", _frozen(self.opacity, np.float64, (m,)))
        object.__setattr__(self, "color", _frozen(self.color, np.float64, (m, 3)))
        object.__setattr__(self, "provenance", _frozen(self.provenance, np.int64, (m, 3)))
        object.__setattr__(self, "views", tuple(self.views))
        if np.any(self.scale <= 0):
            raise DomainError("Gaussian scales must be positive")
        if np.any((self.opacity < 0) | (self.opacity > 1)):
            raise DomainError("Gaussian opacity must lie in [0, 1]")

    @property
    def size(self) -> int:
        return self.mu.shape[0]

    @property
    def primitives(self) -> List[GaussianPrimitive]:
        return [
            GaussianPrimitive(
                mu=tuple(self.mu[i]), rot=tuple(self.rot[i]), scale=tuple(self.scale[i]),
                opacity=float(self.opacity[i]), color=tuple(self.color[i]),
                provenance=tuple(int(v) for v in self.provenance[i]),
            )
            for i in range(self.size)
        ]

    @classmethod
    def from_primitives(
            cls, primitives: Sequence[GaussianPrimitive], views: Sequence[CameraView] = ()
    ) -> "GaussianScene":
        if not primitives:
            raise DomainError("a scene needs at least one Gaussian")
        return cls(
            mu=[p.mu for p in primitives],
            rot=[p.rot for p in primitives],
            scale=[p.scale for p in primitives],
            opacity=[p.opacity for p in primitives],
            color=[p.color for p in primitives],
            provenance=[p.provenance for p in primitives],
            views=tuple(views),
        )

    def _replace(self, **changes: Any) -> "GaussianScene":
        fields = dict(
            mu=self.mu, rot=self.rot, scale=self.scale, opacity=self.opacity,
            color=self.color, provenance=self.provenance, views=self.views,
        )
        fields.update(changes)
        return GaussianScene(**fields)

    def with_colors(self, color: np.ndarray) -> "GaussianScene":
        return self._replace(color=color)

    def with_shape(self, rot: np.ndarray, scale: np.ndarray) -> "GaussianScene":
        return self._replace(rot=rot, scale=scale)

    def with_views(self, views: Sequence[CameraView]) -> "GaussianScene":
        return self._replace(views=tuple(views))

    def covariances(self) -> np.ndarray:
        return covariances(self.rot, self.scale)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "primitives": [
                {
                    "mu": self.mu[i].tolist(),
                    "rot": self.rot[i].tolist(),
                    "scale": self.scale[i].tolist(),
                    "opacity": float(self.opacity[i]),
                    "color": self.color[i].tolist(),
                    "prov": [int(v) for v in self.provenance[i]],
                }
                for i in range(self.size)
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], views: Sequence[CameraView] = ()) -> "GaussianScene":
        try:
            prims = data["primitives"]
            return cls(
                mu=[p["mu"] for p in prims],
                rot=[p["rot"] for p in prims],
                scale=[p["scale"] for p in prims],
                opacity=[p["opacity"] for p in prims],
                color=[p["color"] for p in prims],
                provenance=[p["prov"] for p in prims],
                views=tuple(views),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DomainError(f"malformed scene document: {e}") from e


@dataclass(frozen=True)
class PointMap:
    """Back-projected valid pixels of one view"""
    positions: np.ndarray   # (K, 3) world
    colors: np.ndarray      # (K, 3)
    pixels: np.ndarray      # (K, 2) (row, col)


def backproject(view: CameraView) -> PointMap:
    """World positions and colors of every pixel with depth > 0"""
    camera: Camera = view.camera
    depth = view.depth[0].astype(np.float64)
    rows, cols = np.nonzero(depth > 0)
    d = depth[rows, cols]
    cam = np.stack([
        d * (cols - camera.cx) / camera.fx,
        d * (rows - camera.cy) / camera.fy,
        d,
    ], axis=1)
    return PointMap(
        positions=camera.to_world_space(cam),
        colors=view.image[:, rows, cols].T.astype(np.float64),
        pixels=np.stack([rows, cols], axis=1).astype(np.int64),
    )


def nearest_neighbor_scales(positions: np.ndarray) -> np.ndarray:
    """Isotropic scale per point: distance to its nearest other point"""
    if positions.shape[0] == 1:
        return np.full(1, SINGLE_POINT_SCALE)
    distances, _ = cKDTree(positions).query(positions, k=2)
    return np.maximum(distances[:, 1], MIN_SCALE)


def sample_init(views: Sequence[CameraView], m_count: int, seed: int) -> GaussianScene:
    """
    Initialize M Gaussians at randomly sampled valid pixels of the views

    Opacity is fixed at 1, rotation is identity and the isotropic scale is
    the distance to the nearest other sampled point. Provenance records the
    source (view, row, col).
    """
    if m_count < 1:
        raise DomainError(f"M must be >= 1, got {m_count}")
    maps = [backproject(view) for view in views]
    total = sum(pm.positions.shape[0] for pm in maps)
    if total < m_count:
        raise CapacityError(f"only {total} valid pixels for {m_count} Gaussians")

    positions = np.concatenate([pm.positions for pm in maps])
    colors = np.concatenate([pm.colors for pm in maps])
    provenance = np.concatenate([
        np.column_stack([np.full(pm.pixels.shape[0], v, dtype=np.int64), pm.pixels])
        for v, pm in enumerate(maps)
    ])
    chosen = np.sort(make_rng(seed).choice(total, size=m_count, replace=False))

    mu = positions[chosen]
    scale = nearest_neighbor_scales(mu)
    logger.debug("Sampled Gaussians", count=m_count, valid_pixels=total)
    return GaussianScene(
        mu=mu,
        rot=np.tile([1.0, 0.0, 0.0, 0.0], (m_count, 1)),
        scale=np.repeat(scale[:, None], 3, axis=1),
        opacity=np.ones(m_count),
        color=np.clip(colors[chosen], 0.0, 1.0),
        provenance=provenance[chosen],
        views=tuple(views),
    )
