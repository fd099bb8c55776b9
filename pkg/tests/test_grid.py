import numpy as np
import pytest

from inffusion.core.grid import all_queries, axis_centers, neighbor_query, normalized_grid
from inffusion.errors import ShapeError


class TestNormalizedGrid:
    def test_centers(self):
        np.testing.assert_allclose(axis_centers(4), [-0.75, -0.25, 0.25, 0.75])
        np.testing.assert_allclose(axis_centers(1), [0.0])

    def test_layout(self):
        grid = normalized_grid(2, 4)
        assert grid.coords.shape == (2, 4, 2)
        np.testing.assert_allclose(grid.at(1, 0), [0.5, -0.75])
        assert np.all(np.abs(grid.coords) < 1.0)

    def test_symmetric(self):
        grid = normalized_grid(5, 3)
        np.testing.assert_allclose(grid.coords[::-1, ::-1], -grid.coords, atol=1e-15)

    def test_read_only(self):
        grid = normalized_grid(2, 2)
        with pytest.raises(ValueError):
            grid.coords[0, 0, 0] = 1.0

    def test_rejects_empty(self):
        with pytest.raises(ShapeError):
            normalized_grid(0, 3)


class TestNeighborQuery:
    def test_interior_window(self):
        # LR 4x4 centers at -0.75, -0.25, 0.25, 0.75
        q = neighbor_query(np.array([0.0, -0.5]), 4, 4)
        np.testing.assert_array_equal(q.neighbors, [[1, 0], [1, 1], [2, 0], [2, 1]])
        np.testing.assert_allclose(q.rel[0], [0.25, 0.25])
        np.testing.assert_allclose(q.rel[3], [-0.25, -0.25])

    def test_nearest_tie_goes_to_smaller_index(self):
        q = neighbor_query(np.array([0.0, 0.0]), 4, 4)
        np.testing.assert_array_equal(q.nearest, [1, 1])

    def test_nearest(self):
        q = neighbor_query(np.array([0.2, -0.7]), 4, 4)
        np.testing.assert_array_equal(q.nearest, [2, 0])

    def test_border_clamps_each_axis(self):
        q = neighbor_query(np.array([-0.9, 0.1]), 4, 4)
        np.testing.assert_array_equal(q.neighbors[:, 0], [0, 0, 0, 0])
        np.testing.assert_array_equal(q.neighbors[:, 1], [1, 2, 1, 2])

    def test_query_on_center(self):
        q = neighbor_query(np.array([-0.25, 0.25]), 4, 4)
        np.testing.assert_array_equal(q.neighbors[0], [1, 2])
        np.testing.assert_allclose(q.rel[0], [0.0, 0.0], atol=1e-15)

    def test_bad_query(self):
        with pytest.raises(ShapeError):
            neighbor_query(np.zeros(3), 4, 4)


class TestAllQueries:
    def test_matches_single_queries(self):
        table = all_queries(normalized_grid(8, 8), 2, 2)
        assert table.shape == (8, 8)
        for i in range(8):
            for j in range(8):
                single = neighbor_query(table.query[i, j], 2, 2)
                np.testing.assert_array_equal(table[i, j].neighbors, single.neighbors)
                np.testing.assert_array_equal(table[i, j].nearest, single.nearest)
                np.testing.assert_allclose(table[i, j].rel, single.rel)

    def test_neighbors_in_bounds_and_rel_bounded(self):
        h, w = 3, 5
        table = all_queries(normalized_grid(12, 20), h, w)
        assert table.neighbors[..., 0].min() >= 0 and table.neighbors[..., 0].max() < h
        assert table.neighbors[..., 1].min() >= 0 and table.neighbors[..., 1].max() < w
        assert np.all(np.abs(table.rel) <= 2.0 / min(h, w) + 1e-12)

    def test_flat_indices(self):
        table = all_queries(normalized_grid(4, 6), 2, 3)
        flat = table.flat_neighbor_index()
        assert flat.shape == (24, 4)
        i, j = 3, 5
        expected = table.neighbors[i, j, :, 0] * 3 + table.neighbors[i, j, :, 1]
        np.testing.assert_array_equal(flat[i * 6 + j], expected)
        assert table.flat_nearest_index().shape == (24,)
