"""Pinhole cameras and posed RGB-D views.

Camera space follows the usual vision convention: x right, y down, z
forward. Pixel (u, v) = (col, row) has its center at integer coordinates.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import DomainError

ORTHONORMAL_TOLERANCE = 1e-6


def _readonly(array: np.ndarray, dtype=np.float64) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Camera:
    """Intrinsics (pixels), image size and rigid world-to-camera transform"""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if self.width < 1 or self.height < 1:
            raise DomainError(f"image size must be positive, got {self.width}x{self.height}")
        rotation = _readonly(self.rotation).reshape(3, 3)
        translation = _readonly(self.translation).reshape(3)
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=ORTHONORMAL_TOLERANCE):
            raise DomainError("camera rotation is not orthonormal")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def look_at(
            cls,
            eye: Sequence[float],
            target: Sequence[float],
            width: int,
            height: int,
            fov_deg: float,
            up: Sequence[float] = (0.0, 1.0, 0.0),
    ) -> "Camera":
        """Camera at ``eye`` looking at ``target`` with a horizontal field of view"""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-9:
            raise DomainError("look_at direction is parallel to the up vector")
        right /= norm
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward])
        focal = 0.5 * width / math.tan(math.radians(fov_deg) / 2.0)
        return cls(
            fx=focal, fy=focal,
            cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
            width=width, height=height,
            rotation=rotation, translation=-rotation @ eye,
        )

    @property
    def world_to_cam(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_camera_space(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def to_world_space(self, points_cam: np.ndarray) -> np.ndarray:
        return (points_cam - self.translation) @ self.rotation

    def project_points(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """World points -> ((N, 2) pixel (u, v), (N,) camera-space depth)"""
        cam = self.to_camera_space(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * cam[:, 0] / z + self.cx
            v = self.fy * cam[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) world-space ray directions with unit camera-space z"""
        v, u = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        dirs_cam = np.stack(
            [(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1
        )
        return dirs_cam @ self.rotation

    def same_as(self, other: "Camera") -> bool:
        return (
            (self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            == (other.fx, other.fy, other.cx, other.cy, other.width, other.height)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "intrinsics": {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy},
            "width": self.width,
            "height": self.height,
            "world_to_cam": self.world_to_cam.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Camera":
        try:
            intr = data["intrinsics"]
            matrix = np.asarray(data["world_to_cam"], dtype=np.float64).reshape(4, 4)
            return cls(
                fx=float(intr["fx"]), fy=float(intr["fy"]),
                cx=float(intr["cx"]), cy=float(intr["cy"]),
                width=int(data["width"]), height=int(data["height"]),
                rotation=matrix[:3, :3], translation=matrix[:3, 3],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DomainError(f"malformed camera document: {e}") from e


@dataclass(frozen=True)
class CameraView:
    """
    One input viewpoint: camera plus image, depth, background and mask

    Arrays are channel-first float32: image/background (3, H, W) in [0, 1],
    depth (1, H, W) with 0 marking invalid pixels, mask (1, H, W) in {0, 1}.
    """
    camera: Camera
    image: np.ndarray
    depth: Optional[np.ndarray] = None
    background: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        h, w = self.camera.height, self.camera.width
        expected = {"image": 3, "depth": 1, "background": 3, "mask": 1}
        for name, channels in expected.items():
            value = getattr(self, name)
            if value is None:
                if name == "image":
                    raise DomainError("a camera view needs an image")
                fill = 0.0
                value = np.full((channels, h, w), fill, dtype=np.float32)
            value = _readonly(value, np.float32)
            if value.shape != (channels, h, w):
                raise DomainError(
                    f"{name} has shape {value.shape}, expected {(channels, h, w)}"
                )
            object.__setattr__(self, name, value)

    @property
    def fx(self) -> float:
        return self.camera.fx

    @property
    def fy(self) -> float:
        return self.camera.fy

    @property
    def cx(self) -> float:
        return self.camera.cx

    @property
    def cy(self) -> float:
        return self.camera.cy

    @property
    def world_to_cam(self) -> np.ndarray:
        return self.camera.world_to_cam

    @property
    def height(self) -> int:
        return self.camera.height

    @property
    def width(self) -> int:
        return self.camera.width

    def replace_image(self, image: np.ndarray) -> "CameraView":
        return CameraView(self.camera, image, self.depth, self.background, self.mask)
