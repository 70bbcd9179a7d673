"""Fitting, both training stages, harmonization and evaluation on the toy dataset"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gs_compositor.business.services.evaluation_service import evaluate, evaluate_2d
from gs_compositor.business.services.harmonize_service import harmonize, render_scene
from gs_compositor.business.services.scene_service import SceneService, fit_dataset_scenes
from gs_compositor.business.services.training_service import (
    LOSS_COLUMNS, load_stage1, smoothed_ends, train_stage1, train_stage2,
)
from gs_compositor.core.errors import DataIOError, DomainError
from gs_compositor.formats.documents import load_scene, read_csv, read_json, write_json
from gs_compositor.formats.images import read_pfm, write_pfm
from gs_compositor.nn.params import load_params
from tests.fixtures.sample_data import tiny_config


@pytest.fixture(scope="module")
def scenes_dir(tmp_path_factory, dataset_dir):
    out = tmp_path_factory.mktemp("scenes")
    fit_dataset_scenes(tiny_config(), dataset_dir, out)
    return out


@pytest.fixture(scope="module")
def stage1(tmp_path_factory, dataset):
    return train_stage1(tiny_config(), dataset, tmp_path_factory.mktemp("stage1"))


@pytest.fixture(scope="module")
def stage2(tmp_path_factory, dataset, stage1, scenes_dir):
    config = tiny_config(data={"scenes_dir": str(scenes_dir)})
    return train_stage2(config, dataset, stage1.checkpoint, tmp_path_factory.mktemp("stage2"))


class TestSceneFitting:

    def test_writes_one_directory_per_scene(self, scenes_dir):
        for scene_id in ("scene_000", "scene_001"):
            for name in ("scene.json", "mapping.json", "fit.json"):
                assert (scenes_dir / scene_id / name).is_file()

    def test_load_follows_the_dataset_reference(self, scenes_dir, dataset):
        fitted = SceneService.load(scenes_dir / "scene_001")
        assert fitted.scene_id == "scene_001"
        assert fitted.scene.size == 16
        assert fitted.mapping.m_count == 16
        assert len(fitted.scene.views) == 2
        assert fitted.colors_gt.shape == (16, 3)
        assert_array_equal(fitted.scene.views[0].image, dataset.scene("scene_001").views[0].composite)

    def test_selected_scenes(self, tmp_path, dataset_dir):
        written = fit_dataset_scenes(tiny_config(), dataset_dir, tmp_path, scene_ids=["scene_001"])
        assert [p.name for p in written] == ["scene_001"]
        assert not (tmp_path / "scene_000").exists()

    def test_load_without_dataset_reference(self, tmp_path, scenes_dir):
        target = tmp_path / "copy"
        target.mkdir()
        for name in ("scene.json", "mapping.json"):
            (target / name).write_bytes((scenes_dir / "scene_000" / name).read_bytes())
        write_json(target / "fit.json", {"scene_id": "scene_000", "views": ["view_00", "view_01"]})
        with pytest.raises(DataIOError):
            SceneService.load(target)

    def test_service_caches_fits(self, dataset):
        service = SceneService(tiny_config())
        record = dataset.scenes[0]
        assert service.fitted(record) is service.fitted(record)

    def test_fit_is_seeded(self, tmp_path, dataset_dir, scenes_dir):
        fit_dataset_scenes(tiny_config(), dataset_dir, tmp_path, scene_ids=["scene_000"])
        assert (tmp_path / "scene_000" / "scene.json").read_bytes() == \
            (scenes_dir / "scene_000" / "scene.json").read_bytes()


class TestStage1:

    def test_artifacts(self, stage1):
        assert stage1.checkpoint.name == "model.mvcl"
        metrics = read_json(stage1.metrics)
        assert metrics["stage"] == "stage1"
        assert metrics["steps"] == 4
        rows = read_csv(stage1.loss_curve)
        assert len(rows) == 4
        assert list(rows[0])[:len(LOSS_COLUMNS)] == list(LOSS_COLUMNS)
        assert {"mse", "perceptual"} <= set(rows[0])

    def test_updates_are_clipped(self, stage1):
        clip = tiny_config().stage1.clip_norm
        for row in read_csv(stage1.loss_curve):
            assert float(row["grad_norm_post"]) <= clip + 1e-6
            assert np.isfinite(float(row["loss"]))

    def test_intermediate_checkpoints(self, stage1):
        assert (stage1.checkpoint.parent / "checkpoints" / "step_000002.mvcl").is_file()

    def test_checkpoint_matches_the_model(self, stage1):
        params = load_stage1(tiny_config(), stage1.checkpoint)
        assert params.size == read_json(stage1.metrics)["parameters"]

    def test_threads_do_not_change_the_result(self, tmp_path, dataset, stage1):
        again = train_stage1(tiny_config(threads=2), dataset, tmp_path)
        assert again.checkpoint.read_bytes() == stage1.checkpoint.read_bytes()
        assert again.loss_curve.read_bytes() == stage1.loss_curve.read_bytes()

    def test_rejects_incompatible_checkpoint(self, stage1):
        wider = tiny_config(m2d={"embed_dim": 12}, m3d={"input_channels": None})
        with pytest.raises(DataIOError):
            load_stage1(wider, stage1.checkpoint)

    def test_smoothed_ends(self):
        assert smoothed_ends([4.0, 2.0, 1.0], window=2) == (3.0, 1.5)
        with pytest.raises(DomainError):
            smoothed_ends([])


class TestStage2:

    def test_artifacts(self, stage2):
        metrics = read_json(stage2.metrics)
        assert metrics["stage"] == "stage2"
        assert metrics["steps"] == 3
        rows = read_csv(stage2.loss_curve)
        assert {"grid", "render", "total"} <= set(rows[0])
        params = load_params(stage2.checkpoint)
        assert params["embed.proj.w"].shape[1] == 8

    def test_grid_model_reads_features_and_colors(self, stage2):
        params = load_params(stage2.checkpoint)
        # conv1 of the stem sees n + 3 = 11 channels
        assert params["embed.conv1.w"].shape[1] == 11


class TestHarmonize:

    def test_identity_oracle_keeps_colors(self, tmp_path, scenes_dir, stage1):
        result = harmonize(
            tiny_config(), stage1.checkpoint, None, scenes_dir / "scene_000", tmp_path,
            identity_oracle=True,
        )
        assert result.consistent
        fitted = SceneService.load(scenes_dir / "scene_000")
        harmonized = load_scene(result.scene_path)
        assert_allclose(harmonized.color, np.clip(fitted.scene.color, 0.0, 1.0), atol=1e-7)
        assert_array_equal(harmonized.mu, fitted.scene.mu)
        assert_array_equal(harmonized.opacity, fitted.scene.opacity)

    def test_outputs(self, tmp_path, scenes_dir, stage1, stage2):
        result = harmonize(
            tiny_config(), stage1.checkpoint, stage2.checkpoint, scenes_dir / "scene_001", tmp_path,
        )
        assert result.consistent
        assert sorted(result.renders) == ["holdout_00", "view_00", "view_01"]
        for directory in ("renders", "inharmonious"):
            for name in result.renders:
                image = read_pfm(tmp_path / directory / f"{name}.pfm")
                assert image.shape == (3, 16, 16)
                assert (tmp_path / directory / f"{name}.ppm").is_file()
        assert sorted(p.name for p in (tmp_path / "h2d").glob("*.pfm")) == ["view_00.pfm", "view_01.pfm"]
        colors = load_scene(result.scene_path).color
        assert colors.min() >= 0.0 and colors.max() <= 1.0
        summary = read_json(tmp_path / "harmonize.json")
        assert summary["consistent"] and not summary["identity_oracle"]

    def test_scenes_fitted_during_stage2_can_be_harmonized(self, tmp_path, dataset, stage1):
        fresh = tmp_path / "scenes"
        config = tiny_config(data={"scenes_dir": str(fresh)})
        artifacts = train_stage2(config, dataset, stage1.checkpoint, tmp_path / "stage2")
        assert "dataset" in read_json(fresh / "scene_000" / "fit.json")
        result = harmonize(
            tiny_config(), stage1.checkpoint, artifacts.checkpoint, fresh / "scene_000", tmp_path / "h",
        )
        assert result.consistent

    def test_supplied_backgrounds_feed_the_2d_model(self, tmp_path, scenes_dir, stage1):
        scene_dir = scenes_dir / "scene_000"
        plain = harmonize(tiny_config(), stage1.checkpoint, None, scene_dir, tmp_path / "plain",
                          identity_oracle=True)
        for name in ("view_00", "view_01"):
            write_pfm(tmp_path / "bg" / f"{name}.pfm", np.ones((3, 16, 16), np.float32))
        supplied = harmonize(tiny_config(), stage1.checkpoint, None, scene_dir, tmp_path / "supplied",
                             identity_oracle=True, background_dir=tmp_path / "bg")
        assert plain.consistent and supplied.consistent
        assert not np.array_equal(read_pfm(tmp_path / "plain" / "h2d" / "view_00.pfm"),
                                  read_pfm(tmp_path / "supplied" / "h2d" / "view_00.pfm"))
        assert read_json(tmp_path / "supplied" / "harmonize.json")["background_dir"] == str(tmp_path / "bg")

    def test_missing_background_image(self, tmp_path, scenes_dir, stage1):
        write_pfm(tmp_path / "bg" / "view_00.pfm", np.ones((3, 16, 16), np.float32))
        with pytest.raises(DataIOError):
            harmonize(tiny_config(), stage1.checkpoint, None, scenes_dir / "scene_000", tmp_path / "h",
                      identity_oracle=True, background_dir=tmp_path / "bg")

    def test_extra_cameras_and_render(self, tmp_path, scenes_dir, stage1, dataset_dir):
        camera = dataset_dir / "scene_000" / "holdout_00" / "camera.json"
        result = harmonize(
            tiny_config(), stage1.checkpoint, None, scenes_dir / "scene_000", tmp_path / "h",
            camera_paths=[camera], identity_oracle=True,
        )
        assert "holdout_00" in result.renders
        paths = render_scene(result.scene_path, [camera], tmp_path / "r")
        assert_array_equal(read_pfm(paths["holdout_00"]), read_pfm(result.renders["holdout_00"]))


class TestEvaluate:

    def _write(self, directory, images):
        for name, image in images.items():
            write_pfm(directory / f"{name}.pfm", image)

    def test_identical_and_offset(self, tmp_path):
        gt = {"a": np.zeros((3, 16, 16), np.float32), "b": np.full((3, 16, 16), 0.5, np.float32)}
        self._write(tmp_path / "gt", gt)
        self._write(tmp_path / "same", gt)
        report = evaluate(tmp_path / "same", tmp_path / "gt", out_path=tmp_path / "metrics.json")
        assert report["mean"] == {"psnr": 99.0, "ssim": pytest.approx(1.0)}
        assert read_json(tmp_path / "metrics.json")["views"]["a"]["psnr"] == 99.0

        self._write(tmp_path / "off", {k: v + np.float32(0.1) for k, v in gt.items()})
        report = evaluate(tmp_path / "off", tmp_path / "gt")
        assert report["mean"]["psnr"] == pytest.approx(20.0, abs=1e-4)

    def test_mismatched_sets(self, tmp_path):
        self._write(tmp_path / "gt", {"a": np.zeros((3, 8, 8)), "b": np.zeros((3, 8, 8))})
        self._write(tmp_path / "pred", {"a": np.zeros((3, 8, 8))})
        with pytest.raises(DomainError):
            evaluate(tmp_path / "pred", tmp_path / "gt")
        with pytest.raises(DomainError):
            evaluate(tmp_path / "absent", tmp_path / "gt")

    def test_against_a_dataset_scene(self, tmp_path, scenes_dir, stage1, dataset_dir):
        result = harmonize(
            tiny_config(), stage1.checkpoint, None, scenes_dir / "scene_000", tmp_path,
            identity_oracle=True,
        )
        report = evaluate(tmp_path / "renders", dataset_dir / "scene_000")
        assert sorted(report["views"]) == sorted(result.renders)
        assert set(report["mean"]) == {"psnr", "ssim", "psnr_masked", "ssim_masked"}
        assert 0.0 < report["mean"]["psnr"] <= 99.0

    def test_evaluate_2d(self, dataset, stage1):
        config = tiny_config()
        report = evaluate_2d(config, load_stage1(config, stage1.checkpoint), dataset.pairs())
        assert set(report) == {"model", "composite"}
        assert len(report["model"]["views"]) == 4
        assert report["composite"]["mean"]["psnr"] > 0.0
        with pytest.raises(DomainError):
            evaluate_2d(config, load_stage1(config, stage1.checkpoint), [])
