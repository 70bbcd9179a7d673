"""Harmonization inference and multi-view rendering of Gaussian scenes"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from ...config.settings import PipelineConfig
from ...core.errors import DataIOError
from ...core.logging import log_execution
from ...core.utils import deterministic_blas, ordered_map
from ...formats.documents import load_camera, load_scene, save_scene, write_json
from ...formats.images import read_pfm, write_pfm, write_ppm
from ...nn.model import init_params, m3d_forward
from ...nn.params import ModelParams, check_compatible, load_params
from ...render.rasterizer import render
from ...scene.camera import Camera, CameraView
from ...scene.gaussians import GaussianScene
from ...serialization.mapping import psi, psi_inverse
from .inputs import ViewPrediction, gaussian_features, m3d_input, predict_views
from .scene_service import FittedScene, SceneService
from .training_service import load_stage1

logger = structlog.get_logger()

PathLike = Union[str, Path]

HARMONIZED_SCENE_FILE = "harmonized_scene.json"
SUMMARY_FILE = "harmonize.json"


@dataclass(frozen=True)
class HarmonizeResult:
    scene_path: Path
    renders: Dict[str, Path]
    consistent: bool


def load_stage2(config: PipelineConfig, checkpoint: PathLike) -> ModelParams:
    params = load_params(checkpoint)
    check_compatible(params, init_params(config.m3d, 0).values, checkpoint)
    return params


def harmonized_colors(
        config: PipelineConfig,
        fitted: FittedScene,
        params_2d: ModelParams,
        params_3d: Optional[ModelParams],
        views: Optional[Sequence[CameraView]] = None,
) -> Tuple[np.ndarray, List[ViewPrediction]]:
    """
    (M, 3) harmonized colors clamped to [0, 1], plus the per-view 2D outputs

    Without ``params_3d`` the grid model is the identity oracle that copies
    the Psi(C') channels. ``views`` replaces the fitted scene's input views.
    """
    if views is None:
        views = fitted.scene.views
    predictions = predict_views(views, params_2d, config.m2d, config.ablation, config.threads)
    if params_3d is None:
        grid = psi(fitted.scene.color, fitted.mapping)
    else:
        features = gaussian_features(predictions, fitted.scene, config.ablation)
        grid = m3d_forward(
            m3d_input(features, fitted.scene.color, fitted.mapping), params_3d, config.m3d
        )
    colors = psi_inverse(np.asarray(grid, dtype=np.float64), fitted.mapping)
    return np.clip(colors, 0.0, 1.0), predictions


def camera_name(path: PathLike) -> str:
    """``view_00/camera.json`` -> ``view_00``; ``front.json`` -> ``front``"""
    path = Path(path)
    return path.parent.name if path.stem == "camera" else path.stem


def with_backgrounds(
        views: Sequence[CameraView], names: Sequence[str], background_dir: PathLike
) -> List[CameraView]:
    """Views with G replaced by <background_dir>/<name>.pfm"""
    background_dir = Path(background_dir)
    replaced = []
    for name, view in zip(names, views):
        path = background_dir / f"{name}.pfm"
        if not path.is_file():
            raise DataIOError("Missing background image", path)
        replaced.append(replace(view, background=read_pfm(path)))
    return replaced


def render_views(
        scene: GaussianScene, cameras: Sequence[Tuple[str, Camera]], threads: int = 1
) -> Dict[str, np.ndarray]:
    images = ordered_map(lambda item: render(scene, item[1]), cameras, threads)
    return {name: image for (name, _), image in zip(cameras, images)}


def _write_images(directory: Path, images: Dict[str, np.ndarray]) -> Dict[str, Path]:
    paths = {}
    for name, image in images.items():
        paths[name] = write_pfm(directory / f"{name}.pfm", image)
        write_ppm(directory / f"{name}.ppm", image)
    return paths


@log_execution(log_args=False)
def render_scene(
        scene_path: PathLike,
        camera_paths: Sequence[PathLike],
        out_dir: PathLike,
        threads: int = 1,
) -> Dict[str, Path]:
    """Render a scene JSON from each camera JSON into ``out_dir``/<name>.pfm|.ppm"""
    scene = load_scene(scene_path)
    cameras = [(camera_name(p), load_camera(p)) for p in camera_paths]
    with deterministic_blas():
        images = render_views(scene, cameras, threads)
    return _write_images(Path(out_dir), images)


@log_execution(log_args=False)
def harmonize(
        config: PipelineConfig,
        stage1_checkpoint: PathLike,
        stage2_checkpoint: Optional[PathLike],
        scene_dir: PathLike,
        out_dir: PathLike,
        camera_paths: Sequence[PathLike] = (),
        identity_oracle: bool = False,
        background_dir: Optional[PathLike] = None,
) -> HarmonizeResult:
    """
    Full inference on one fitted scene

    Writes the harmonized scene JSON (only colors differ from the fitted
    scene), harmonized and inharmonious renders for the training, held-out
    and any extra cameras, and the per-view 2D outputs. Every render is then
    reproduced from the emitted scene JSON and compared bit for bit. With
    ``background_dir`` the 2D model reads user-supplied backgrounds instead
    of the stored ones.
    """
    out_dir = Path(out_dir)
    fitted = SceneService.load(scene_dir)
    params_2d = load_stage1(config, stage1_checkpoint)
    params_3d = None if identity_oracle else load_stage2(config, stage2_checkpoint)
    views = None
    if background_dir is not None:
        views = with_backgrounds(
            fitted.scene.views, [v.name for v in fitted.record.views], background_dir
        )

    with deterministic_blas():
        colors, predictions = harmonized_colors(config, fitted, params_2d, params_3d, views)
        harmonized = fitted.scene.with_colors(colors)
        scene_path = save_scene(out_dir / HARMONIZED_SCENE_FILE, harmonized)

        record = fitted.record
        cameras = [(v.name, v.view.camera) for v in record.views + record.holdout]
        cameras += [(camera_name(p), load_camera(p)) for p in camera_paths]
        renders = render_views(harmonized, cameras, config.threads)
        before = render_views(fitted.scene, cameras, config.threads)
        reloaded = render_views(load_scene(scene_path), cameras, config.threads)

    consistent = all(np.array_equal(renders[name], reloaded[name]) for name, _ in cameras)
    paths = _write_images(out_dir / "renders", renders)
    _write_images(out_dir / "inharmonious", before)
    _write_images(
        out_dir / "h2d",
        {v.name: np.clip(p.harmonized, 0.0, 1.0) for v, p in zip(record.views, predictions)},
    )
    write_json(out_dir / SUMMARY_FILE, {
        "scene_id": fitted.scene_id,
        "gaussians": harmonized.size,
        "views": [name for name, _ in cameras],
        "identity_oracle": identity_oracle,
        "background_dir": None if background_dir is None else str(background_dir),
        "consistent": consistent,
    })
    if not consistent:
        logger.warning("Re-rendered views differ from the harmonized renders", scene=fitted.scene_id)
    return HarmonizeResult(scene_path=scene_path, renders=paths, consistent=consistent)
