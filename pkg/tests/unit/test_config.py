"""Pipeline configuration: defaults, validation, JSON documents and overrides"""

import json
from pathlib import Path

import numpy as np
import pytest

from gs_compositor.config.settings import ConfigManager, LossWeights, PipelineConfig
from gs_compositor.config.validators import (
    is_power_of_two, log2_exact, require_shape, smallest_power_of_two_side,
)
from gs_compositor.core.errors import ConfigError, DomainError
from tests.fixtures.sample_data import tiny_config, tiny_config_dict


class TestPipelineConfig:

    def test_defaults_derive_the_3d_input(self):
        cfg = PipelineConfig()
        assert cfg.m2d.input_channels == 7
        assert cfg.m3d.input_channels == cfg.m2d.embed_dim + 3
        assert cfg.m3d.patch == 2
        assert cfg.stage2.batch_size == 1

    def test_tiny_config(self):
        cfg = tiny_config()
        assert cfg.m3d.input_channels == 11
        assert cfg.loss.lam == 0.05
        assert cfg.scene.num_gaussians == 16

    @pytest.mark.parametrize("overrides", [
        {"m2d": {"input_channels": 5}},
        {"m3d": {"input_channels": 12}},
        {"stage1": {"warmup_steps": 10, "total_steps": 4}},
        {"m2d": {"embed_dim": 9}},
        {"loss": {"beta": 1.5}},
        {"seed": -1},
        {"ablation": {"serialization": "zigzag"}},
        {"scene": {"num_gaussians": 1}},
        {"scene": {"num_gaussians": 16}, "m3d": {"patch": 8, "input_channels": None}},
    ])
    def test_invalid_documents(self, overrides):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict(tiny_config_dict(**overrides))

    def test_lambda_alias(self):
        cfg = tiny_config(loss={"lambda": 0.2})
        assert cfg.loss.lam == 0.2
        assert json.loads(cfg.to_json())["loss"]["lambda"] == 0.2
        assert LossWeights(lam=0.3).lam == 0.3

    def test_json_round_trip(self, tmp_path):
        cfg = tiny_config(seed=7)
        path = tmp_path / "config.json"
        path.write_text(cfg.to_json())
        assert PipelineConfig.from_json(path) == cfg

    def test_unreadable_files(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig.from_json(tmp_path / "absent.json")
        path = tmp_path / "broken.json"
        path.write_text("{")
        with pytest.raises(ConfigError):
            PipelineConfig.from_json(path)

    def test_overrides(self):
        cfg = tiny_config()
        assert cfg.with_overrides(seed=5, threads=None).seed == 5
        assert cfg.with_overrides(seed=5).threads == cfg.threads
        with pytest.raises(ConfigError):
            cfg.with_overrides(threads=0)

    def test_shipped_default_document(self):
        path = Path(__file__).resolve().parents[2] / "shared" / "configs" / "default.json"
        cfg = PipelineConfig.from_json(path)
        assert cfg.m3d.input_channels == cfg.m2d.embed_dim + 3
        assert cfg.scene.num_gaussians == 256


class TestConfigManager:

    def test_load_and_set(self, tmp_path):
        manager = ConfigManager()
        assert manager is ConfigManager()
        assert manager.load() == PipelineConfig()
        path = tmp_path / "config.json"
        path.write_text(tiny_config().to_json())
        assert manager.load(path).scene.num_gaussians == 16
        manager.set(tiny_config(seed=3))
        assert manager.config.seed == 3


class TestValidators:

    @pytest.mark.parametrize("count,side", [(1, 1), (2, 2), (4, 2), (5, 4), (16, 4), (17, 8), (256, 16)])
    def test_smallest_side(self, count, side):
        assert smallest_power_of_two_side(count) == side

    def test_powers_of_two(self):
        assert is_power_of_two(1) and is_power_of_two(64)
        assert not is_power_of_two(0) and not is_power_of_two(12)
        assert log2_exact(32) == 5
        with pytest.raises(DomainError):
            log2_exact(12)
        with pytest.raises(DomainError):
            smallest_power_of_two_side(0)

    def test_require_shape_wildcards(self):
        require_shape("x", np.zeros((4, 3)), (-1, 3))
        with pytest.raises(DomainError):
            require_shape("x", np.zeros((4, 2)), (-1, 3))
