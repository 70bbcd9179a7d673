"""Analytic scenes, the ray tracer, lighting mixes and dataset generation"""

import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gs_compositor.config.constants import SKY_COLOR
from gs_compositor.config.settings import SynthConfig
from gs_compositor.core.errors import CapacityError, DataIOError, DomainError
from gs_compositor.formats.documents import load_camera, read_json
from gs_compositor.scene.camera import Camera
from gs_compositor.scene.gaussians import backproject
from gs_compositor.synthkit.dataset import load_dataset, make_dataset, manifest_paths
from gs_compositor.synthkit.scene import (
    AnalyticScene, Lighting, Sphere, make_scene, orbit_camera, orbit_cameras,
)
from gs_compositor.synthkit.tracer import RenderedView, composite_mix, raytrace

TINY_SYNTH = SynthConfig(image_size=8, n_bg=1)


def _pole_scene() -> AnalyticScene:
    sphere = Sphere(center=(0.0, 0.5, 0.0), radius=0.5, albedo=(0.5, 0.6, 0.7), foreground=True)
    light = Lighting(position=(0.0, 3.0, 0.0), intensity=(2.0, 3.0, 4.0))
    return AnalyticScene(spheres=(sphere,), lighting=light)


class TestMakeScene:

    def test_seeded(self):
        assert make_scene(7, 2, 3) == make_scene(7, 2, 3)
        assert make_scene(7, 2, 3) != make_scene(8, 2, 3)

    def test_spheres_rest_on_the_plane_without_overlap(self):
        for seed in range(10):
            scene = make_scene(seed, 2, 3)
            for s in scene.spheres:
                assert s.center[1] == s.radius
            for a, b in itertools.combinations(scene.spheres, 2):
                gap = np.linalg.norm(np.subtract(a.center, b.center))
                assert gap >= a.radius + b.radius

    def test_single_sphere(self):
        scene = make_scene(0, 1, 0)
        assert len(scene.spheres) == 1
        assert scene.spheres[0].foreground

    def test_light_above_the_plane(self):
        for seed in range(5):
            assert make_scene(seed, 1, 1).lighting.position[1] > 0.0

    def test_arguments(self):
        with pytest.raises(DomainError):
            make_scene(0, 0, 2)
        with pytest.raises(DomainError):
            make_scene(0, 1, -1)

    def test_overcrowded_plane(self):
        with pytest.raises(CapacityError):
            make_scene(0, 1, 200)


class TestOrbit:

    def test_cameras_look_at_the_target(self):
        for camera in orbit_cameras(4, radius=4.0, elevation_deg=30.0, image_size=9, fov_deg=50.0,
                                    target_height=0.3):
            uv, z = camera.project_points(np.array([0.0, 0.3, 0.0]))
            assert_allclose(uv[0], [4.0, 4.0], atol=1e-9)
            assert z[0] == pytest.approx(4.0)

    def test_azimuth_zero_sits_on_positive_z(self):
        center = orbit_camera(0.0, 2.0, 0.0, 8, 50.0).center
        assert_allclose(center, [0.0, 0.0, 2.0], atol=1e-12)


class TestRaytrace:

    def test_sky_pixel(self):
        scene = AnalyticScene(spheres=(), lighting=Lighting(position=(0.0, 5.0, 0.0), intensity=(1.0, 1.0, 1.0)))
        camera = Camera.look_at([0.0, 1.0, 5.0], [0.0, 3.0, 0.0], 9, 9, 40.0)
        view = raytrace(scene, camera)
        assert_allclose(view.image[:, 4, 4], SKY_COLOR, atol=1e-7)
        assert view.depth[0, 4, 4] == 0.0
        assert view.mask[0, 4, 4] == 0.0

    def test_top_pole_shading(self):
        camera = Camera.look_at([0.0, 4.0, 1e-3], [0.0, 1.0, 0.0], 9, 9, 30.0)
        view = raytrace(_pole_scene(), camera)
        # n . l = 1 at distance 2, no ambient
        expected = np.array([0.5, 0.6, 0.7]) * np.array([2.0, 3.0, 4.0]) / 4.0
        assert_allclose(view.image[:, 4, 4], expected, rtol=1e-5)
        assert view.mask[0, 4, 4] == 1.0
        assert view.depth[0, 4, 4] == pytest.approx(math.sqrt(9.0 + 1e-6), rel=1e-6)

    def test_blocked_plane_point_gets_ambient_only(self):
        sphere = Sphere(center=(0.0, 0.5, 0.0), radius=0.5, albedo=(0.5, 0.5, 0.5))
        light = Lighting(position=(-4.0, 1.0, 0.0), intensity=(10.0, 10.0, 10.0), ambient=(0.1, 0.2, 0.3))
        camera = Camera.look_at([1.5, 3.0, 3.0], [1.5, 0.0, 0.0], 9, 9, 30.0)
        shadowed = AnalyticScene(spheres=(sphere,), lighting=light, plane_albedo=(0.6, 0.6, 0.6))
        open_plane = AnalyticScene(spheres=(), lighting=light, plane_albedo=(0.6, 0.6, 0.6))
        assert_allclose(raytrace(shadowed, camera).image[:, 4, 4], [0.06, 0.12, 0.18], rtol=1e-5)
        assert np.all(raytrace(open_plane, camera).image[:, 4, 4] > [0.06, 0.12, 0.18])

    def test_background_drops_foreground_spheres(self):
        camera = Camera.look_at([0.0, 4.0, 1e-3], [0.0, 1.0, 0.0], 9, 9, 30.0)
        view = raytrace(_pole_scene(), camera)
        empty = raytrace(AnalyticScene(spheres=(), lighting=_pole_scene().lighting), camera)
        assert_array_equal(view.background, empty.image)

    def test_values_finite_and_non_negative(self):
        scene = make_scene(4, 2, 2)
        view = raytrace(scene, orbit_camera(45.0, 4.0, 30.0, 16, 50.0, 0.3))
        for array in (view.image, view.background, view.depth):
            assert np.all(np.isfinite(array))
            assert array.min() >= 0.0

    def test_depth_backprojects_onto_surfaces(self):
        scene = make_scene(3, 1, 2)
        view = raytrace(scene, orbit_camera(30.0, 4.0, 30.0, 32, 50.0, 0.3)).to_camera_view()
        points = backproject(view).positions
        residual = np.abs(points[:, 1] - scene.plane_height)
        for s in scene.spheres:
            residual = np.minimum(residual, np.abs(np.linalg.norm(points - s.center, axis=1) - s.radius))
        assert residual.max() < 1e-3


class TestCompositeMix:

    def _views(self, camera, mask_value):
        shape = (camera.height, camera.width)
        mask = np.full((1, *shape), mask_value, dtype=np.float32)

        def make(value):
            image = np.full((3, *shape), value, dtype=np.float32)
            return RenderedView(camera=camera, image=image, depth=np.ones((1, *shape), np.float32),
                                mask=mask, background=image)
        return make(0.2), make(0.7)

    @pytest.mark.parametrize("mask_value,expected", [(1.0, 0.2), (0.0, 0.7)])
    def test_mask_selects_the_source(self, mask_value, expected):
        a, b = self._views(orbit_camera(0.0, 3.0, 20.0, 8, 50.0), mask_value)
        assert_allclose(composite_mix(a, b), expected)

    def test_same_lighting_reproduces_ground_truth(self):
        scene = make_scene(2, 1, 2)
        camera = orbit_camera(60.0, 4.0, 30.0, 16, 50.0, 0.3)
        assert_array_equal(composite_mix(raytrace(scene, camera), raytrace(scene, camera)),
                           raytrace(scene, camera).image)

    def test_mismatches(self):
        cam_a = orbit_camera(0.0, 3.0, 20.0, 8, 50.0)
        cam_b = orbit_camera(90.0, 3.0, 20.0, 8, 50.0)
        a, _ = self._views(cam_a, 1.0)
        _, b = self._views(cam_b, 1.0)
        with pytest.raises(DomainError):
            composite_mix(a, b)
        a, _ = self._views(cam_a, 1.0)
        _, b = self._views(cam_a, 0.0)
        with pytest.raises(DomainError):
            composite_mix(a, b)


class TestDataset:

    def test_uniform_orbit(self, tmp_path):
        manifest = make_dataset(1, 4, seed=3, out_dir=tmp_path, synth=TINY_SYNTH, n_holdout=2)
        scene = manifest["scenes"][0]
        assert [v["azimuth_deg"] for v in scene["views"]] == [0.0, 90.0, 180.0, 270.0]
        assert [v["azimuth_deg"] for v in scene["holdout"]] == [45.0, 225.0]
        for entry in scene["views"]:
            camera = load_camera(tmp_path / entry["camera"])
            expected = orbit_camera(
                entry["azimuth_deg"], TINY_SYNTH.orbit_radius, TINY_SYNTH.orbit_elevation_deg,
                TINY_SYNTH.image_size, TINY_SYNTH.fov_deg, TINY_SYNTH.look_at_height,
            )
            assert camera.same_as(expected)

    def test_regeneration_is_bit_identical(self, tmp_path):
        first = make_dataset(1, 2, seed=5, out_dir=tmp_path / "a", synth=TINY_SYNTH, n_holdout=1)
        make_dataset(1, 2, seed=5, out_dir=tmp_path / "b", synth=TINY_SYNTH, n_holdout=1, threads=2)
        for rel in manifest_paths(first) + ["manifest.json"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_every_manifest_path_exists(self, dataset_dir):
        for rel in manifest_paths(read_json(dataset_dir / "manifest.json")):
            assert (dataset_dir / rel).is_file()

    def test_loaded_views(self, dataset):
        assert [s.scene_id for s in dataset.scenes] == ["scene_000", "scene_001"]
        for record in dataset.scenes:
            assert len(record.views) == 2 and len(record.holdout) == 1
            for view in record.views:
                assert view.composite.shape == (3, 16, 16)
                outside = view.mask[0] < 0.5
                assert_array_equal(view.composite[:, outside], view.gt[:, outside])

    def test_scene_selection(self, dataset_dir):
        subset = load_dataset(dataset_dir, ["scene_001"])
        assert [(s.scene_id, s.index) for s in subset.scenes] == [("scene_001", 1)]
        with pytest.raises(DataIOError):
            load_dataset(dataset_dir, ["scene_999"])
        with pytest.raises(DomainError):
            subset.scene("scene_000")

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(DataIOError):
            load_dataset(tmp_path / "absent")

    def test_needs_two_views(self, tmp_path):
        with pytest.raises(DomainError):
            make_dataset(1, 1, seed=0, out_dir=tmp_path)
