"""Multi-view composite datasets: generation to disk and loading back.

Layout under ``out_dir``::

    manifest.json
    scene_000/scene.json
    scene_000/view_00/{composite,gt,background,depth}.pfm
    scene_000/view_00/{composite,gt,mask}.ppm
    scene_000/view_00/camera.json
    scene_000/holdout_00/...

All manifest paths are relative to the manifest's directory.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import structlog

from ..config.settings import SynthConfig
from ..core.errors import DataIOError, DomainError
from ..core.logging import ContextLogger, log_execution
from ..core.utils import make_rng, ordered_map
from ..formats.documents import load_camera, read_json, save_camera, write_json
from ..formats.images import read_mask_ppm, read_pfm, write_mask_ppm, write_pfm, write_ppm
from ..scene.camera import CameraView
from .scene import AnalyticScene, Lighting, make_scene, orbit_camera, orbit_azimuths, sample_lighting
from .tracer import RenderedView, composite_mix, raytrace

logger = structlog.get_logger()

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
VIEW_FILES = ("composite", "gt", "background", "depth", "mask", "camera")


@dataclass(frozen=True)
class CompositeView:
    """One loaded view: inharmonious input, GT under the scene lighting, and its rays' data"""
    name: str
    azimuth_deg: float
    view: CameraView
    gt: np.ndarray

    @property
    def composite(self) -> np.ndarray:
        return self.view.image

    @property
    def mask(self) -> np.ndarray:
        return self.view.mask


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    index: int
    views: List[CompositeView]
    holdout: List[CompositeView]
    dataset_root: Optional[Path] = None

    def camera_views(self) -> List[CameraView]:
        return [v.view for v in self.views]

    def gt_views(self) -> List[CameraView]:
        """Training views carrying the harmonized images"""
        return [v.view.replace_image(v.gt) for v in self.views]


@dataclass(frozen=True)
class Dataset:
    root: Path
    seed: int
    scenes: List[SceneRecord]

    def pairs(self) -> List[CompositeView]:
        """Every training view of every scene, in manifest order"""
        return [v for s in self.scenes for v in s.views]

    def scene(self, scene_id: str) -> SceneRecord:
        for record in self.scenes:
            if record.scene_id == scene_id:
                return record
        raise DomainError(f"no scene {scene_id!r} in dataset {self.root}")


def _export(view: RenderedView, composite: np.ndarray, gt: np.ndarray, directory: Path, root: Path) -> Dict[str, str]:
    files = {
        "composite": directory / "composite.pfm",
        "gt": directory / "gt.pfm",
        "background": directory / "background.pfm",
        "depth": directory / "depth.pfm",
        "mask": directory / "mask.ppm",
        "camera": directory / "camera.json",
        "composite_preview": directory / "composite.ppm",
        "gt_preview": directory / "gt.ppm",
    }
    composite = np.clip(composite, 0.0, 1.0)
    gt = np.clip(gt, 0.0, 1.0)
    write_pfm(files["composite"], composite)
    write_pfm(files["gt"], gt)
    write_pfm(files["background"], np.clip(view.background, 0.0, 1.0))
    write_pfm(files["depth"], view.depth)
    write_mask_ppm(files["mask"], view.mask)
    save_camera(files["camera"], view.camera)
    write_ppm(files["composite_preview"], composite)
    write_ppm(files["gt_preview"], gt)
    return {k: p.relative_to(root).as_posix() for k, p in files.items()}


def _render_pair(scene: AnalyticScene, camera, lighting_fg: Lighting):
    """(composite, gt view): foreground under ``lighting_fg``, everything else under the scene light"""
    view_b = raytrace(scene, camera, scene.lighting)
    view_a = raytrace(scene, camera, lighting_fg)
    return composite_mix(view_a, view_b), view_b


def _write_scene(
        index: int,
        seed: int,
        n_views: int,
        n_holdout: int,
        synth: SynthConfig,
        root: Path,
        threads: int,
) -> Dict[str, Any]:
    scene_id = f"scene_{index:03d}"
    scene_dir = root / scene_id
    scene = make_scene(int(make_rng(seed, index).integers(2 ** 31)), synth.n_fg, synth.n_bg)
    lighting_fg = sample_lighting(make_rng(seed, index, 1))
    write_json(scene_dir / "scene.json", {**scene.to_dict(), "foreground_lighting": lighting_fg.to_dict()})

    train = [(f"view_{k:02d}", az) for k, az in enumerate(orbit_azimuths(n_views))]
    held = [
        (f"holdout_{k:02d}", az)
        for k, az in enumerate(orbit_azimuths(n_holdout, 180.0 / n_views))
    ] if n_holdout else []

    def emit(item):
        name, azimuth = item
        camera = orbit_camera(
            azimuth, synth.orbit_radius, synth.orbit_elevation_deg,
            synth.image_size, synth.fov_deg, synth.look_at_height,
        )
        composite, gt_view = _render_pair(scene, camera, lighting_fg)
        paths = _export(gt_view, composite, gt_view.image, scene_dir / name, root)
        return {"name": name, "azimuth_deg": azimuth, **paths}

    # tracing fans out; the manifest is assembled in view order
    entries = ordered_map(emit, train + held, threads)
    return {
        "id": scene_id,
        "scene": (scene_dir / "scene.json").relative_to(root).as_posix(),
        "views": entries[:len(train)],
        "holdout": entries[len(train):],
    }


@log_execution(log_args=False)
def make_dataset(
        n_scenes: int,
        n_views: int,
        seed: int,
        out_dir: PathLike,
        synth: Optional[SynthConfig] = None,
        n_holdout: int = 0,
        threads: int = 1,
) -> Dict[str, Any]:
    """
    Generate ``n_scenes`` analytic scenes with ``n_views`` orbit views each

    Each view pairs an inharmonious composite (foreground lit by a second
    random light) with its ground truth under the scene light. Held-out
    views sit at azimuths interleaved with the training orbit. Output is a
    pure function of the arguments.
    """
    if n_scenes < 1:
        raise DomainError(f"n_scenes must be >= 1, got {n_scenes}")
    if n_views < 2:
        raise DomainError(f"n_views must be >= 2, got {n_views}")
    if n_holdout < 0:
        raise DomainError(f"n_holdout must be >= 0, got {n_holdout}")
    synth = synth or SynthConfig()
    root = Path(out_dir)

    scenes = []
    for index in range(n_scenes):
        with ContextLogger("make_dataset.scene", include_caller=False, scene=index):
            scenes.append(_write_scene(index, seed, n_views, n_holdout, synth, root, threads))

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "n_views": n_views,
        "n_holdout": n_holdout,
        "synth": synth.model_dump(),
        "scenes": scenes,
    }
    write_json(root / MANIFEST_NAME, manifest)
    logger.info("Dataset written", root=str(root), scenes=n_scenes, views=n_views)
    return manifest


def _load_view(root: Path, entry: Dict[str, Any]) -> CompositeView:
    missing = [k for k in VIEW_FILES if k not in entry]
    if missing:
        raise DataIOError(f"Manifest view is missing {missing}", root / MANIFEST_NAME)
    camera = load_camera(root / entry["camera"])
    view = CameraView(
        camera=camera,
        image=read_pfm(root / entry["composite"]),
        depth=read_pfm(root / entry["depth"]),
        background=read_pfm(root / entry["background"]),
        mask=read_mask_ppm(root / entry["mask"]),
    )
    return CompositeView(
        name=str(entry.get("name", "")),
        azimuth_deg=float(entry.get("azimuth_deg", math.nan)),
        view=view,
        gt=read_pfm(root / entry["gt"]),
    )


def load_dataset(root: PathLike, scene_ids: Optional[Sequence[str]] = None) -> Dataset:
    """Read a dataset written by :func:`make_dataset`, optionally only some scenes"""
    root = Path(root)
    manifest = read_json(root / MANIFEST_NAME)
    try:
        entries = list(enumerate(manifest["scenes"]))
        if scene_ids is not None:
            known = {s["id"] for _, s in entries}
            unknown = sorted(set(scene_ids) - known)
            if unknown:
                raise DataIOError(f"Scenes not in manifest: {unknown}", root / MANIFEST_NAME)
            entries = [(i, s) for i, s in entries if s["id"] in set(scene_ids)]
        scenes = [
            SceneRecord(
                scene_id=s["id"],
                index=index,
                views=[_load_view(root, v) for v in s["views"]],
                holdout=[_load_view(root, v) for v in s.get("holdout", [])],
                dataset_root=root,
            )
            for index, s in entries
        ]
        seed = int(manifest["seed"])
    except (KeyError, TypeError) as e:
        raise DataIOError(f"Malformed manifest ({e})", root / MANIFEST_NAME) from e
    except DomainError as e:
        raise DataIOError(str(e), root / MANIFEST_NAME) from e
    return Dataset(root=root, seed=seed, scenes=scenes)


def manifest_paths(manifest: Dict[str, Any]) -> List[str]:
    """Every file path listed in a manifest"""
    paths: List[str] = []
    for scene in manifest["scenes"]:
        paths.append(scene["scene"])
        for entry in list(scene["views"]) + list(scene.get("holdout", [])):
            paths.extend(v for k, v in entry.items() if k not in ("name", "azimuth_deg"))
    return paths
