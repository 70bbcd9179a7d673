"""Analytic ray-traced scenes and inharmonious composite datasets"""

from .dataset import CompositeView, Dataset, SceneRecord, load_dataset, make_dataset
from .scene import AnalyticScene, Lighting, Sphere, make_scene, orbit_camera, orbit_cameras, sample_lighting
from .tracer import RenderedView, composite_mix, raytrace

__all__ = [
    "AnalyticScene", "Lighting", "Sphere", "make_scene", "orbit_camera", "orbit_cameras",
    "sample_lighting", "RenderedView", "composite_mix", "raytrace",
    "CompositeView", "Dataset", "SceneRecord", "load_dataset", "make_dataset",
]
