"""Assembly of network inputs for both stages.

Stage 1 sees per view the concatenation {I, G, D} (7 channels). Stage 2
sees the Gaussian grid {Psi(Phi(F)), Psi(C')} (n + 3 channels).
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ...config.settings import AblationConfig, ModelConfig
from ...core.errors import DomainError
from ...core.utils import ordered_map
from ...nn.model import ParamSource, m2d_forward
from ...scene.camera import CameraView
from ...scene.gaussians import GaussianScene
from ...serialization.mapping import GridMapping, phi, psi


def normalize_depth(depth: np.ndarray) -> np.ndarray:
    """Divide by the view's maximum depth; all-invalid maps stay zero"""
    depth = np.asarray(depth, dtype=np.float32)
    peak = float(depth.max()) if depth.size else 0.0
    return depth / peak if peak > 0 else np.zeros_like(depth)


def m2d_input(view: CameraView, ablation: AblationConfig) -> np.ndarray:
    """(7, H, W) float32: composite, background (or zeros), normalized depth (or zeros)"""
    background = view.background if ablation.use_background else np.zeros_like(view.background)
    depth = normalize_depth(view.depth) if ablation.use_depth else np.zeros_like(view.depth)
    return np.concatenate([view.image, background, depth], axis=0).astype(np.float32)


@dataclass(frozen=True)
class ViewPrediction:
    harmonized: np.ndarray   # (3, H, W) H_hat
    features: np.ndarray     # (E, H, W) F_feat


def predict_views(
        views: Sequence[CameraView],
        params: ParamSource,
        cfg: ModelConfig,
        ablation: AblationConfig,
        threads: int = 1,
) -> List[ViewPrediction]:
    """Run the per-view model on every view, results in view order"""

    def one(view: CameraView) -> ViewPrediction:
        h_hat, feats = m2d_forward(m2d_input(view, ablation), params, cfg)
        return ViewPrediction(harmonized=h_hat, features=feats)

    return ordered_map(one, views, threads)


def gaussian_features(
        predictions: Sequence[ViewPrediction],
        scene: GaussianScene,
        ablation: AblationConfig,
) -> np.ndarray:
    """(M, n) per-Gaussian features lifted through provenance"""
    if not predictions:
        raise DomainError("no view predictions to lift")
    stacked = np.stack([p.features for p in predictions])
    lifted = phi(stacked, scene.provenance)
    if not ablation.use_2d_features:
        lifted = np.zeros_like(lifted)
    return lifted


def m3d_input(features: np.ndarray, colors: np.ndarray, mapping: GridMapping) -> np.ndarray:
    """(n + 3, S, S) float32 grid {Psi(Phi(F)), Psi(C')}"""
    if features.shape[0] != colors.shape[0]:
        raise DomainError(
            f"{features.shape[0]} feature rows for {colors.shape[0]} Gaussians"
        )
    grid = np.concatenate([psi(features, mapping), psi(colors, mapping)], axis=0)
    return grid.astype(np.float32)
