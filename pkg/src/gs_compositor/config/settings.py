# src/gs_compositor/config/settings.py
"""Configuration management with validation"""

import json
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.errors import ConfigError
from . import constants
from .validators import smallest_power_of_two_side

logger = structlog.get_logger()


class ModelConfig(BaseModel):
    """Window-attention compositing network (M_2d or M_3d)"""
    embed_dim: int = Field(default=32, ge=1)
    blocks: int = Field(default=2, ge=1)
    layers_per_block: int = Field(default=2, ge=1)
    heads: int = Field(default=4, ge=1)
    window: int = Field(default=4, ge=1)
    patch: int = Field(default=4, ge=1)
    stem_channels: int = Field(default=16, ge=1)
    # None means "derive from the 2D model" (M_3d input = n + 3)
    input_channels: Optional[int] = Field(default=7, ge=1)
    output_channels: int = Field(default=3, ge=1)

    @model_validator(mode="after")
    def check_heads(self) -> "ModelConfig":
        if self.embed_dim % self.heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}"
            )
        return self


class OptimizerConfig(BaseModel):
    """AdamW, clipping and warmup+cosine schedule"""
    lr: float = Field(default=constants.BASE_LR, gt=0)
    beta1: float = Field(default=constants.ADAM_BETA1, ge=0, lt=1)
    beta2: float = Field(default=constants.ADAM_BETA2, ge=0, lt=1)
    eps: float = Field(default=constants.ADAM_EPS, gt=0)
    weight_decay: float = Field(default=constants.WEIGHT_DECAY, ge=0)
    warmup_steps: int = Field(default=100, ge=0)
    total_steps: int = Field(default=2000, ge=1)
    clip_norm: float = Field(default=constants.CLIP_NORM, gt=0)
    min_lr: float = Field(default=constants.MIN_LR, ge=0)
    batch_size: int = Field(default=4, ge=1)
    log_every: int = Field(default=20, ge=1)
    checkpoint_every: int = Field(default=500, ge=1)

    @model_validator(mode="after")
    def check_schedule(self) -> "OptimizerConfig":
        if self.warmup_steps > self.total_steps:
            raise ValueError(
                f"warmup_steps {self.warmup_steps} exceeds total_steps {self.total_steps}"
            )
        return self


class LossWeights(BaseModel):
    """Perceptual weight, grid/render blend and rendered-view count"""
    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(default=0.05, ge=0, alias="lambda")
    beta: float = Field(default=0.5, ge=0, le=1)
    n_render_views: int = Field(default=2, ge=1)


class SceneConfig(BaseModel):
    """Gaussian scene initialization and shape fitting"""
    num_gaussians: int = Field(default=256, ge=1)
    hilbert_order: int = Field(
        default=constants.DEFAULT_HILBERT_ORDER, ge=1, le=constants.MAX_HILBERT_ORDER
    )
    fit_iters: int = Field(default=200, ge=1)
    fit_lr: float = Field(default=0.01, gt=0)


class SynthConfig(BaseModel):
    """Analytic scene generator and camera orbit"""
    image_size: int = Field(default=64, ge=8)
    fov_deg: float = Field(default=50.0, gt=0, lt=180)
    orbit_radius: float = Field(default=4.0, gt=0)
    orbit_elevation_deg: float = Field(default=30.0, gt=-90, lt=90)
    look_at_height: float = 0.3
    n_fg: int = Field(default=1, ge=1)
    n_bg: int = Field(default=2, ge=0)


class AblationConfig(BaseModel):
    """Input switches for ablation runs; defaults are the full pipeline"""
    use_depth: bool = True
    use_background: bool = True
    use_2d_features: bool = True
    serialization: Literal["hilbert", "raster"] = "hilbert"


class DataConfig(BaseModel):
    """Dataset and artifact locations"""
    dataset_dir: Optional[Path] = None
    scenes_dir: Optional[Path] = None
    stage1_checkpoint: Optional[Path] = None
    stage2_checkpoint: Optional[Path] = None


class LogConfig(BaseModel):
    """Logging configuration"""
    level: Optional[Literal["error", "info", "debug"]] = None
    log_file: Optional[Path] = None
    max_file_size: int = Field(default=5_242_880, ge=1_048_576)
    backup_count: int = Field(default=5, ge=1, le=20)


def _default_m3d() -> ModelConfig:
    return ModelConfig(input_channels=None, patch=2)


def _default_stage2_optim() -> OptimizerConfig:
    return OptimizerConfig(warmup_steps=25, total_steps=500, batch_size=1)


class PipelineConfig(BaseModel):
    """Main pipeline configuration"""
    m2d: ModelConfig = Field(default_factory=ModelConfig)
    m3d: ModelConfig = Field(default_factory=_default_m3d)
    stage1: OptimizerConfig = Field(default_factory=OptimizerConfig)
    stage2: OptimizerConfig = Field(default_factory=_default_stage2_optim)
    loss: LossWeights = Field(default_factory=LossWeights)
    scene: SceneConfig = Field(default_factory=SceneConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    logging: LogConfig = Field(default_factory=LogConfig)
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)

    @field_validator("m2d")
    @classmethod
    def check_m2d_input(cls, v: ModelConfig) -> ModelConfig:
        if v.input_channels != 7:
            raise ValueError("m2d.input_channels must be 7 (image, background, depth)")
        return v

    @model_validator(mode="after")
    def resolve_m3d_input(self) -> "PipelineConfig":
        expected = self.m2d.embed_dim + 3
        if self.m3d.input_channels is None:
            self.m3d = self.m3d.model_copy(update={"input_channels": expected})
        elif self.m3d.input_channels != expected:
            raise ValueError(
                f"m3d.input_channels {self.m3d.input_channels} must equal "
                f"m2d.embed_dim + 3 = {expected}"
            )
        return self

    @model_validator(mode="after")
    def check_grid_patch(self) -> "PipelineConfig":
        side = smallest_power_of_two_side(self.scene.num_gaussians)
        if side % self.m3d.patch != 0:
            raise ValueError(
                f"grid side {side} for {self.scene.num_gaussians} Gaussians is not "
                f"divisible by m3d.patch {self.m3d.patch}"
            )
        return self

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]) -> "PipelineConfig":
        """Create configuration from dictionary"""
        try:
            return cls.model_validate(config_dict)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

    @classmethod
    def from_json(cls, config_path: Path) -> "PipelineConfig":
        """Load configuration from a JSON file"""
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigError(f"Configuration file not found: {config_path}")
        try:
            config_dict = json.loads(config_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read configuration {config_path}: {e}") from e
        return cls.from_dict(config_dict)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, by_alias=True)

    def with_overrides(self, **updates: Any) -> "PipelineConfig":
        """Copy with top-level fields replaced, re-validated"""
        data = self.model_dump(by_alias=True)
        data.update({k: v for k, v in updates.items() if v is not None})
        return PipelineConfig.from_dict(data)


class ConfigManager:
    """Configuration manager singleton"""
    _instance: Optional["ConfigManager"] = None
    _config: Optional[PipelineConfig] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def load(self, config_path: Optional[Path] = None) -> PipelineConfig:
        """Load configuration from a JSON file, or defaults when no path is given"""
        if config_path is None:
            self._config = PipelineConfig()
            logger.info("Configuration defaults loaded")
        else:
            self._config = PipelineConfig.from_json(Path(config_path))
            logger.info("Configuration loaded", path=str(config_path))
        return self._config

    def set(self, config: PipelineConfig) -> None:
        self._config = config

    @property
    def config(self) -> PipelineConfig:
        """Get current configuration"""
        if self._config is None:
            raise ConfigError("Configuration not loaded. Call load() first.")
        return self._config


config_manager = ConfigManager()
