"""Cameras, Gaussian primitives and scene initialization

Shape fitting lives in :mod:`gs_compositor.scene.fitting`, which depends on
the rasterizer and is imported on its own.
"""

from .camera import Camera, CameraView
from .gaussians import (
    GaussianPrimitive, GaussianScene, PointMap, backproject, covariance, sample_init,
)

__all__ = [
    "Camera", "CameraView", "GaussianPrimitive", "GaussianScene", "PointMap",
    "backproject", "covariance", "sample_init",
]
