"""Tests for hyperplane geometry: TLS fits, centroids, facets and angles."""

import math

import numpy as np
import pytest

from splinelens.core.batchnorm import apply_stats, compute_stats
from splinelens.core.geometry import (
    DegenerateHyperplaneError,
    Hyperplane,
    NonAdjacentCodesError,
    StatsProvenanceError,
    UnreachableFacetError,
    centroid_incidence,
    check_folded_translation,
    check_tls_minimizer,
    dihedral_angles,
    distance_to_hyperplane,
    facet_local_distance,
    facet_local_distances,
    folded_distance,
    layer_hyperplanes,
    line_angle,
    q_matrix,
    tls_fit_quality,
    tls_loss,
    with_threshold,
)
from splinelens.core.network import (
    BNMode,
    NetworkSpec,
    glorot_network,
    layer_threshold,
)
from splinelens.core.partition import trace
from splinelens.utils.random import make_rng


@pytest.fixture
def bn_net(star_points):
    net = glorot_network(
        [2, 5, 5, 1], "leaky", make_rng(11, "network"), alpha=0.1, bn_layers=(1, 2)
    )
    return net, apply_stats(net, compute_stats(net, star_points))


class TestHyperplanes:
    """Test hyperplane distances."""

    def test_distance(self):
        plane = Hyperplane(np.array([3.0, 4.0]), 5.0)
        assert distance_to_hyperplane(np.zeros(2), plane) == pytest.approx(1.0)
        np.testing.assert_allclose(
            distance_to_hyperplane(np.array([[0.0, 0.0], [3.0, 4.0]]), plane),
            [1.0, 4.0],
        )

    def test_zero_normal(self):
        with pytest.raises(DegenerateHyperplaneError):
            Hyperplane(np.zeros(3), 1.0)

    def test_layer_hyperplanes_use_thresholds(self, bn_net):
        net, bn = bn_net
        planes = layer_hyperplanes(net, bn, 2)
        assert len(planes) == 5
        np.testing.assert_allclose(
            [plane.mu for plane in planes], layer_threshold(net, bn, 2)
        )


class TestTotalLeastSquares:
    """Test the TLS view of BN statistics."""

    def test_loss_is_minimized_at_the_mean(self):
        rng = make_rng(0, "tls")
        W = rng.normal(size=(3, 4))
        batch = rng.normal(size=(50, 4))
        mean = (batch @ W.T).mean(axis=0)
        best = tls_loss(mean, W, batch)
        expected = np.sum((batch @ W.T).var(axis=0) / np.sum(W**2, axis=1))

        assert best == pytest.approx(expected)
        assert tls_loss(mean + 0.1, W, batch) > best

    def test_minimizer_matches_batch_mean(self):
        rng = make_rng(1, "tls")
        W = rng.normal(size=(4, 3))
        batch = rng.normal(size=(32, 3))
        report = check_tls_minimizer(W, batch)

        assert report.gap <= 1e-9
        assert report.identity_residual <= 1e-10

    def test_offset_statistics_are_detected(self):
        rng = make_rng(2, "tls")
        W = rng.normal(size=(2, 3))
        batch = rng.normal(size=(32, 3))
        mu = (batch @ W.T).mean(axis=0) + 1e-3
        report = check_tls_minimizer(W, batch, mu=mu)
        assert report.gap == pytest.approx(1e-3, rel=1e-3)

    def test_constant_projection(self):
        """A batch on the hyperplane has zero loss at its projection."""
        batch = np.ones((5, 2))
        report = check_tls_minimizer(np.array([[1.0, -1.0]]), batch)
        assert report.gap <= 1e-12

    def test_zero_row_is_degenerate(self):
        with pytest.raises(DegenerateHyperplaneError, match="Rows"):
            tls_loss(np.zeros(2), np.array([[1.0, 0.0], [0.0, 0.0]]), np.ones((3, 2)))


class TestCentroid:
    """Test that BN hyperplanes pass through the batch centroid."""

    def test_incidence_in_every_bn_layer(self, bn_net, star_points):
        net, bn = bn_net
        for layer in (1, 2):
            assert centroid_incidence(net, bn, layer, star_points) <= 1e-10

    def test_fixed_statistics_are_refused(self, bn_net, star_points):
        net, bn = bn_net
        with pytest.raises(StatsProvenanceError, match="fixed"):
            centroid_incidence(net, bn.with_mode(BNMode.FIXED), 1, star_points)

    def test_fit_quality_is_the_variance_ratio(self, bn_net, star_points):
        """With batch statistics each unit's TLS loss is sigma^2 / ||w||^2."""
        net, bn = bn_net
        quality = tls_fit_quality(net, bn, 1, star_points)
        expected = bn[1].sigma ** 2 / np.sum(net.weight(1) ** 2, axis=1)
        np.testing.assert_allclose(quality, expected, rtol=1e-10)


class TestFacetDistances:
    """Test exact and in-region distances to folded hyperplanes."""

    def test_first_layer_distance_is_euclidean(self, cross_net):
        x = np.array([1.0, 2.0])
        assert facet_local_distance(cross_net, None, x, 1, 1) == pytest.approx(1.0)
        assert facet_local_distance(cross_net, None, x, 1, 2) == pytest.approx(2.0)

    def test_folded_distance_on_the_cross(self, cross_net):
        partition = trace(cross_net, None, 1)
        x = np.array([1.0, 2.0])
        assert folded_distance(cross_net, None, x, 1, 1, partition) == pytest.approx(
            1.0
        )
        assert folded_distance(cross_net, None, x, 1, 2, partition) == pytest.approx(
            2.0
        )

    def test_vectorized_matches_single(self, leaky_net):
        X = make_rng(3, "points").uniform(-2, 2, size=(6, 2))
        table = facet_local_distances(leaky_net, None, X, [1, 2])
        assert table.shape == (6, 12)
        for row, x in zip(table, X, strict=True):
            singles = [
                facet_local_distance(leaky_net, None, x, j, k)
                for j in (1, 2)
                for k in range(1, 7)
            ]
            np.testing.assert_allclose(row, singles, rtol=1e-10)

    def test_folded_distance_is_inf_outside_the_box(self, cross_net):
        net, _ = with_threshold(cross_net, None, 1, 1, 10.0)
        partition = trace(net, None, 1)
        assert math.isinf(folded_distance(net, None, np.zeros(2), 1, 1, partition))


class TestFoldedTranslation:
    """Test that closer hyperplanes give closer folded hyperplanes."""

    def test_with_threshold_moves_one_unit(self, bn_net):
        net, bn = bn_net
        _, moved = with_threshold(net, bn, 2, 3, 0.25)
        thresholds = layer_threshold(net, moved, 2)
        assert thresholds[2] == pytest.approx(0.25)
        np.testing.assert_array_equal(
            np.delete(thresholds, 2), np.delete(layer_threshold(net, bn, 2), 2)
        )

    def test_moving_toward_the_point(self, cross_net):
        report = check_folded_translation(
            cross_net, None, np.array([1.0, 0.5]), 1, 1, 0.5
        )
        assert report.ok
        assert report.feature_distance == pytest.approx(1.0)
        assert report.folded_distance_alt == pytest.approx(0.5)

    def test_unreachable_facet(self, cross_net):
        with pytest.raises(UnreachableFacetError):
            check_folded_translation(cross_net, None, np.zeros(2), 1, 1, 10.0)


class TestAngles:
    """Test dihedral angles between facets."""

    def test_identity_case(self):
        report = dihedral_angles(
            np.eye(2), None, np.ones(2), 1, (1.0, 1.0), (-1.0, 1.0)
        )
        assert report.theta_F_H == pytest.approx(math.pi / 4)
        assert report.theta_Fp_H == pytest.approx(math.pi / 4)
        assert report.theta_F_Fp == pytest.approx(math.pi / 2)
        assert report.unfolded_F_Fp == pytest.approx(math.pi / 2)

    def test_codes_must_differ_at_the_unit(self):
        with pytest.raises(NonAdjacentCodesError):
            dihedral_angles(np.eye(2), None, np.ones(2), 1, (1.0, 1.0), (1.0, 0.1))

    def test_line_angle(self):
        assert line_angle(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == pytest.approx(
            math.pi / 2
        )
        assert line_angle(np.array([1.0, 0.0]), np.array([-2.0, 0.0])) == 0.0

    def test_q_matrix(self, bn_net):
        net, bn = bn_net
        code = np.array([1.0, 0.1, 1.0, 0.1, 1.0])
        q = q_matrix(net, bn, 1, code)
        np.testing.assert_allclose(q.diagonal, code * bn[1].gamma / bn[1].sigma)
        plain = NetworkSpec.build(
            [np.eye(2), np.ones((1, 2))], activation="leaky", alpha=0.1
        )
        np.testing.assert_array_equal(
            q_matrix(plain, None, 1, [0.1, 1.0]).matrix, np.diag([0.1, 1.0])
        )
