"""Tests for exact partition tracing."""

import numpy as np
import pytest

from splinelens.core.network import NetworkError, NetworkSpec
from splinelens.core.partition import (
    PartitionError,
    RegionBudgetError,
    as_box,
    compare_with_grid,
    decision_boundary,
    grid_centers,
    grid_folded_distance,
    point_segment_distances,
    polygon_area,
    sample_segments,
    trace,
    unique_codes,
    write_partition_csv,
)
from splinelens.utils.random import make_rng


def _lines_net(rows, offsets):
    """One hidden layer whose units are the given lines, plus a scalar head."""
    rows = np.asarray(rows, dtype=np.float64)
    return NetworkSpec.build(
        [rows, np.ones((1, rows.shape[0]))],
        [np.asarray(offsets, dtype=np.float64), np.zeros(1)],
        activation="leaky",
        alpha=0.1,
    )


class TestLineArrangements:
    """Test the first layer: an arrangement of lines in the box."""

    def test_bare_box(self, cross_net):
        partition = trace(cross_net, None, 0)
        assert len(partition.regions) == 1
        assert partition.segments.shape == (0, 4)
        assert partition.codes() == [""]

    def test_cross(self, cross_net):
        partition = trace(cross_net, None, 1)
        assert len(partition.regions) == 4
        assert partition.segments.shape == (4, 4)
        assert sorted(partition.codes()) == ["00", "01", "10", "11"]
        assert partition.total_area == pytest.approx(partition.box_area)

    def test_concurrent_lines(self):
        """Three lines through one point give six regions."""
        net = _lines_net([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [0.0, 0.0, 0.0])
        partition = trace(net, None, 1)
        assert len(partition.regions) == 6

    def test_generic_lines(self):
        """x = 0, y = 0 and x + y = 1 cut the box into seven regions."""
        net = _lines_net([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [0.0, 0.0, -1.0])
        partition = trace(net, None, 1)
        assert len(partition.regions) == 7
        assert partition.total_area == pytest.approx(36.0)

    def test_line_outside_the_box(self):
        net = _lines_net([[1.0, 0.0]], [-5.0])
        partition = trace(net, None, 1)
        assert len(partition.regions) == 1
        assert partition.codes() == ["0"]
        assert partition.folded_hyperplane(1, 1).shape == (0, 4)

    def test_labels_are_one_based(self, cross_net):
        partition = trace(cross_net, None, 1)
        assert set(map(tuple, partition.labels.tolist())) == {(1, 1), (1, 2)}
        vertical = partition.folded_hyperplane(1, 1)
        np.testing.assert_allclose(vertical[:, [0, 2]], 0.0, atol=1e-12)


class TestDeepPartitions:
    """Test tracing through several layers."""

    def test_regions_tile_the_box(self, leaky_net):
        partition = trace(leaky_net, None, leaky_net.depth)
        assert partition.total_area == pytest.approx(partition.box_area, rel=1e-9)
        assert all(region.polygon.area > 0.0 for region in partition.regions)

    def test_matches_grid_codes(self, leaky_net):
        partition = trace(leaky_net, None, 2)
        comparison = compare_with_grid(partition, leaky_net, None, 200)
        assert comparison.exact
        assert comparison.checked_cells > 0

    @pytest.mark.timeout(20)
    def test_fine_grid_comparison(self, leaky_net):
        partition = trace(leaky_net, None, 2)
        comparison = compare_with_grid(partition, leaky_net, None, 1500)
        assert comparison.exact
        assert comparison.grid_codes <= comparison.traced_codes

    def test_region_lookup(self, cross_net):
        partition = trace(cross_net, None, 1)
        index = partition.region_index(np.array([1.0, -1.0]))
        assert partition.regions[index].code.key == "10"
        assert partition.region_index(np.array([5.0, 5.0])) is None

    def test_budget(self, cross_net):
        with pytest.raises(RegionBudgetError, match="budget of 3"):
            trace(cross_net, None, 1, region_budget=3)

    def test_depth_out_of_range(self, cross_net):
        with pytest.raises(PartitionError, match="upto"):
            trace(cross_net, None, 3)

    def test_needs_two_dimensional_inputs(self):
        net = NetworkSpec.build([np.ones((2, 3)), np.ones((1, 2))])
        with pytest.raises(PartitionError, match="D_0 = 2"):
            trace(net, None, 1)

    @pytest.mark.parametrize("box", [(0, 0, -1, 1), (1, -1, -1, 1), (0, 1, 2)])
    def test_invalid_box(self, box):
        with pytest.raises(PartitionError):
            as_box(box)


class TestDecisionBoundary:
    """Test extracting the output unit's folded hyperplane."""

    def test_boundary_of_scalar_head(self, cross_net):
        partition = trace(cross_net, None, 2)
        boundary = decision_boundary(partition)
        assert boundary.shape[0] > 0
        np.testing.assert_allclose(boundary[:, 0], boundary[:, 1], atol=1e-9)
        np.testing.assert_allclose(boundary[:, 2], boundary[:, 3], atol=1e-9)

    def test_partition_must_reach_the_head(self, cross_net):
        with pytest.raises(PartitionError, match="head is layer 2"):
            decision_boundary(trace(cross_net, None, 1))

    def test_head_must_be_scalar(self):
        net = NetworkSpec.build([np.eye(2), np.eye(2)], activation="leaky", alpha=0.1)
        with pytest.raises(PartitionError, match="scalar head"):
            decision_boundary(trace(net, None, 2))


class TestSegmentHelpers:
    """Test segment sampling and grid helpers."""

    def test_point_segment_distances(self):
        segments = np.array([[0.0, 0.0, 1.0, 0.0], [2.0, 2.0, 2.0, 3.0]])
        np.testing.assert_allclose(
            point_segment_distances(np.array([0.5, 1.0]), segments),
            [1.0, np.hypot(1.5, 1.0)],
        )

    def test_sample_segments_by_arc_length(self):
        segments = np.array([[0.0, 0.0, 3.0, 0.0], [0.0, 1.0, 1.0, 1.0]])
        points = sample_segments(segments, 100)
        assert points.shape == (100, 2)
        assert np.count_nonzero(points[:, 1] == 0.0) == 75
        assert sample_segments(np.zeros((0, 4)), 10).shape == (0, 2)

    def test_grid_centers(self):
        xs, ys, points = grid_centers((0, 2, 0, 4), 2)
        np.testing.assert_allclose(xs, [0.5, 1.5])
        np.testing.assert_allclose(ys, [1.0, 3.0])
        np.testing.assert_allclose(points[1], [1.5, 1.0])

    def test_grid_folded_distance_is_within_a_cell(self, cross_net):
        distance = grid_folded_distance(
            cross_net, None, np.array([1.0, 2.0]), 1, 1, (-3, 3, -3, 3), 600
        )
        assert abs(distance - 1.0) <= np.hypot(0.01, 0.01)

    def test_grid_folded_distance_needs_2d(self):
        net = NetworkSpec.build([np.ones((2, 3)), np.ones((1, 2))])
        with pytest.raises(NetworkError):
            grid_folded_distance(net, None, np.zeros(3), 1, 1, (-1, 1, -1, 1), 4)

    def test_polygon_area_is_signed(self):
        square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert polygon_area(square) == pytest.approx(1.0)
        assert polygon_area(square[::-1]) == pytest.approx(-1.0)

    def test_csv_export(self, tmp_path, cross_net):
        regions, segments = write_partition_csv(
            trace(cross_net, None, 1), tmp_path, "cross"
        )
        assert regions.name == "cross_regions.csv"
        assert len(segments.read_text().splitlines()) == 5


class TestUniqueCodes:
    """Test deduplicating grid codes."""

    @pytest.mark.parametrize("width", [5, 64, 70])
    def test_matches_row_sets(self, width):
        rng = make_rng(0, "codes")
        distinct = rng.random((20, width)) < 0.5
        bits = distinct[rng.integers(0, 20, 500)]
        unique = unique_codes(bits)

        assert {tuple(row) for row in unique} == {tuple(row) for row in bits}
        assert len(unique) == len({tuple(row) for row in bits})
        first_seen = list(dict.fromkeys(tuple(row) for row in bits))
        assert [tuple(row) for row in unique] == first_seen

    def test_no_units(self):
        assert unique_codes(np.zeros((4, 0), bool)).shape == (1, 0)
        assert unique_codes(np.zeros((0, 0), bool)).shape == (0, 0)
