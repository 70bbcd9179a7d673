"""Services behind the command-line subcommands"""

from .evaluation_service import evaluate, evaluate_2d
from .harmonize_service import HarmonizeResult, harmonize, render_scene
from .scene_service import FittedScene, SceneService, fit_dataset_scenes
from .training_service import RunArtifacts, train_stage1, train_stage2

__all__ = [
    "FittedScene", "HarmonizeResult", "RunArtifacts", "SceneService", "evaluate", "evaluate_2d",
    "fit_dataset_scenes", "harmonize", "render_scene", "train_stage1", "train_stage2",
]
