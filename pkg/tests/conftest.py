# tests/conftest.py
"""Shared fixtures: seeded generators, tiny configurations and a generated toy dataset"""

from pathlib import Path

import numpy as np
import pytest

from gs_compositor.config.settings import PipelineConfig
from gs_compositor.core.logging import setup_logging
from gs_compositor.core.utils import make_rng
from gs_compositor.synthkit.dataset import Dataset, load_dataset, make_dataset
from tests.fixtures.sample_data import tiny_config


@pytest.fixture(scope="session", autouse=True)
def quiet_logging():
    setup_logging(level="error")


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(1234)


@pytest.fixture
def config() -> PipelineConfig:
    return tiny_config()


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory) -> Path:
    """Two scenes, two training views and one held-out view each, 16x16"""
    root = tmp_path_factory.mktemp("dataset")
    make_dataset(2, 2, seed=0, out_dir=root, synth=tiny_config().synth, n_holdout=1)
    return root


@pytest.fixture(scope="session")
def dataset(dataset_dir) -> Dataset:
    return load_dataset(dataset_dir)
