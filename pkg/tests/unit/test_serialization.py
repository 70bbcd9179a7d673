"""Hilbert curves, point ordering, grid folding and the psi/phi mappings"""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from gs_compositor.core.errors import DomainError
from gs_compositor.serialization.benchmark import morton_order, run_locality_benchmark
from gs_compositor.serialization.hilbert import (
    h2_coord_to_index, h2_index_to_coord, h3_coord_to_index, h3_index_to_coord,
    hilbert_decode, hilbert_encode, order_points,
)
from gs_compositor.serialization.mapping import (
    GridMapping, build_grid_mapping, mapping_for_centers, phi, psi, psi_inverse,
)


class TestHilbertCurves:

    def test_origin_conventions(self):
        assert h2_index_to_coord(0, 1) == (0, 0)
        assert h2_coord_to_index(0, 0, 1) == 0
        assert h3_index_to_coord(0, 1) == (0, 0, 0)
        assert h3_coord_to_index(0, 0, 0, 1) == 0

    @pytest.mark.parametrize("dims,max_order", [(2, 4), (3, 3)])
    def test_exhaustive_bijection_and_unit_steps(self, dims, max_order):
        for p in range(1, max_order + 1):
            indices = np.arange(1 << (dims * p))
            coords = hilbert_decode(indices, p, dims)
            assert np.unique(coords, axis=0).shape[0] == indices.size
            assert coords.min() == 0 and coords.max() == (1 << p) - 1
            steps = np.abs(np.diff(coords, axis=0)).sum(axis=1)
            assert np.all(steps == 1)
            assert_array_equal(hilbert_encode(coords, p), indices)

    def test_last_index_round_trip(self):
        x, y = h2_index_to_coord(15, 2)
        assert h2_coord_to_index(x, y, 2) == 15

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            h2_index_to_coord(4, 1)
        with pytest.raises(DomainError):
            h2_coord_to_index(2, 0, 1)
        with pytest.raises(DomainError):
            h3_index_to_coord(64, 2)
        with pytest.raises(DomainError):
            h3_coord_to_index(0, 0, -1, 2)

    def test_order_outside_supported_range(self):
        with pytest.raises(DomainError):
            hilbert_decode(np.array([0]), 0, 2)
        with pytest.raises(DomainError):
            hilbert_decode(np.array([0]), 2, 4)


class TestOrderPoints:

    def test_bounding_box_minimum_comes_first(self):
        perm = order_points([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
        assert perm[0] == 1

    def test_ties_keep_input_order(self):
        assert_array_equal(order_points([[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]]), [0, 1])

    def test_independent_of_input_permutation(self, rng):
        points = rng.random((60, 3))
        shuffle = rng.permutation(60)
        ordered = points[order_points(points)]
        reshuffled = points[shuffle]
        assert_array_equal(reshuffled[order_points(reshuffled)], ordered)

    def test_is_a_permutation(self, rng):
        perm = order_points(rng.random((200, 3)), p=4)
        assert_array_equal(np.sort(perm), np.arange(200))

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(DomainError):
            order_points(np.zeros((0, 3)))
        with pytest.raises(DomainError):
            order_points([[0.0, np.nan, 0.0], [1.0, 1.0, 1.0]])
        with pytest.raises(DomainError):
            order_points([[0.0, 0.0], [1.0, 1.0]])


class TestGridMapping:

    def test_single_gaussian(self):
        mapping = build_grid_mapping(1)
        assert mapping.side == 1
        assert_array_equal(mapping.cells, [[0, 0]])
        grid = psi(np.array([[0.2, 0.4, 0.6]]), mapping)
        assert grid.shape == (3, 1, 1)
        assert_array_equal(grid[:, 0, 0], [0.2, 0.4, 0.6])

    def test_four_gaussians_follow_order_one_curve(self):
        mapping = build_grid_mapping(4)
        assert mapping.side == 2
        expected = [h2_index_to_coord(d, 1) for d in range(4)]
        # x runs along columns, y along rows
        assert_array_equal(mapping.cells, [[y, x] for x, y in expected])

    def test_padding(self):
        mapping = build_grid_mapping(5)
        assert mapping.side == 4
        grid = psi(np.ones((5, 1)), mapping)
        assert int(grid.sum()) == 5
        assert int((grid == 0).sum()) == 11

    def test_zero_gaussians_rejected(self):
        with pytest.raises(DomainError):
            build_grid_mapping(0)

    def test_raster_fold(self):
        mapping = build_grid_mapping(5, fold="raster")
        assert_array_equal(mapping.cells, [[0, 0], [0, 1], [0, 2], [0, 3], [1, 0]])

    def test_psi_round_trip_is_exact(self, rng):
        for m in list(range(1, 40)) + [63, 64, 65, 127, 200, 256, 300]:
            values = rng.standard_normal((m, 5)).astype(np.float32)
            mapping = mapping_for_centers(rng.random((m, 3)))
            assert_array_equal(psi_inverse(psi(values, mapping), mapping), values)

    def test_raster_serialization_keeps_input_order(self, rng):
        mapping = mapping_for_centers(rng.random((10, 3)), serialization="raster")
        assert_array_equal(mapping.perm, np.arange(10))

    def test_shape_mismatch(self):
        mapping = build_grid_mapping(4)
        with pytest.raises(DomainError):
            psi(np.zeros((3, 3)), mapping)
        with pytest.raises(DomainError):
            psi_inverse(np.zeros((3, 4, 4)), mapping)

    def test_document_round_trip_validates(self, rng):
        mapping = mapping_for_centers(rng.random((7, 3)))
        restored = GridMapping.from_dict(mapping.to_dict())
        assert_array_equal(restored.perm, mapping.perm)
        assert_array_equal(restored.cells, mapping.cells)

        broken = mapping.to_dict()
        broken["perm"] = [0] * 7
        with pytest.raises(DomainError):
            GridMapping.from_dict(broken)


class TestPhi:

    def test_gathers_the_provenance_pixel(self, rng):
        maps = rng.random((2, 4, 8, 8))
        features = phi(maps, np.array([[0, 3, 7]]))
        assert_array_equal(features[0], maps[0, :, 3, 7])

    def test_shared_provenance_gives_identical_rows(self, rng):
        maps = rng.random((1, 3, 5, 5))
        features = phi(maps, np.array([[0, 2, 2], [0, 2, 2]]))
        assert_array_equal(features[0], features[1])

    def test_constant_maps(self):
        features = phi(np.ones((2, 6, 4, 4)), np.array([[0, 0, 0], [1, 3, 3], [1, 1, 2]]))
        assert_array_equal(features, np.ones((3, 6)))

    def test_out_of_bounds(self):
        with pytest.raises(DomainError):
            phi(np.ones((1, 2, 4, 4)), np.array([[0, 4, 0]]))
        with pytest.raises(DomainError):
            phi(np.ones((1, 2, 4, 4)), np.array([[1, 0, 0]]))


class TestLocalityBenchmark:

    def test_hilbert_beats_random(self):
        scores = run_locality_benchmark(n_points=1000, seed=0)
        assert set(scores) == {"hilbert", "morton", "random"}
        assert scores["hilbert"] > scores["random"]
        assert scores["morton"] > scores["random"]

    def test_morton_is_a_permutation(self, rng):
        perm = morton_order(rng.random((50, 3)), p=5)
        assert_array_equal(np.sort(perm), np.arange(50))
