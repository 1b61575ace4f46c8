"""Tests for mini-batch jitter of statistics and decision boundaries."""

import math

import numpy as np
import pytest

from splinelens.core.batchnorm import sample_realizations
from splinelens.core.datasets import two_class_2d
from splinelens.core.jitter import (
    EnsembleSizeError,
    analytic_predictions,
    boundary_ensemble,
    distribution_report,
    hausdorff,
    mean_pairwise_hausdorff,
    noise_controlled_ensemble,
    write_report_csv,
)
from splinelens.core.network import glorot_network
from splinelens.core.partition import PartitionError
from splinelens.core.training import InitMode, initialize
from splinelens.utils.random import make_rng


@pytest.fixture
def bn_template():
    return glorot_network(
        [2, 6, 6, 1], "leaky", make_rng(5, "network"), alpha=0.1, bn_layers=(1, 2)
    )


class TestHausdorff:
    """Test the boundary distance."""

    def test_empty_sets(self):
        empty = np.zeros((0, 4))
        line = np.array([[0.0, 0.0, 1.0, 0.0]])
        assert hausdorff(empty, empty) == 0.0
        assert math.isinf(hausdorff(empty, line))
        assert math.isinf(hausdorff(line, empty))

    def test_identical_and_shifted_lines(self):
        line = np.array([[-1.0, 0.0, 1.0, 0.0]])
        shifted = np.array([[-1.0, 0.25, 1.0, 0.25]])
        assert hausdorff(line, line) == 0.0
        assert hausdorff(line, shifted) == pytest.approx(0.25)

    def test_mean_over_pairs(self):
        lines = [np.array([[-1.0, y, 1.0, y]]) for y in (0.0, 0.1, 0.3)]
        assert mean_pairwise_hausdorff(lines) == pytest.approx((0.1 + 0.3 + 0.2) / 3)
        assert mean_pairwise_hausdorff(lines[:1]) == 0.0


class TestBoundaryEnsemble:
    """Test decision boundaries under resampled statistics."""

    def test_full_batch_gives_identical_boundaries(self, bn_template, clusters):
        ensemble = boundary_ensemble(bn_template, clusters, len(clusters), 3, seed=0)
        assert len(ensemble.boundaries) == 3
        for boundary in ensemble.boundaries[1:]:
            np.testing.assert_array_equal(boundary, ensemble.boundaries[0])
        assert mean_pairwise_hausdorff(ensemble.boundaries) == 0.0

    @pytest.mark.slow
    @pytest.mark.timeout(1200)
    def test_large_batches_jitter_less(self):
        dataset = two_class_2d("clusters", n=512, noise=0.3, seed=0)
        template = glorot_network([2, 16, 16, 1], "leaky", make_rng(0), alpha=0.1)
        for seed in range(10):
            net, bn = initialize(template, InitMode.BN_WARMUP, dataset, seed)
            spread = {}
            for size in (16, 256):
                ensemble = boundary_ensemble(net, dataset, size, 20, seed=seed, bn=bn)
                spread[size] = mean_pairwise_hausdorff(ensemble.boundaries)
            assert spread[256] < spread[16], f"seed {seed}: {spread}"

    def test_single_draw(self, bn_template, clusters):
        ensemble = boundary_ensemble(bn_template, clusters, 16, 1, seed=0)
        assert len(ensemble) == 1
        assert mean_pairwise_hausdorff(ensemble.boundaries) == 0.0

    def test_thread_count_does_not_matter(self, bn_template, clusters):
        serial = boundary_ensemble(bn_template, clusters, 16, 4, seed=2, threads=1)
        threaded = boundary_ensemble(bn_template, clusters, 16, 4, seed=2, threads=3)
        for a, b in zip(serial.boundaries, threaded.boundaries, strict=True):
            np.testing.assert_array_equal(a, b)

    def test_needs_two_dimensional_inputs(self, clusters):
        net = glorot_network(
            [3, 4, 1], "leaky", make_rng(0), alpha=0.1, bn_layers=(1,)
        )
        with pytest.raises(PartitionError, match="2-D"):
            boundary_ensemble(net, np.ones((10, 3)), 4, 1)


class TestDistributionReport:
    """Test empirical against analytic spread of the statistics."""

    def test_rows_per_unit(self, bn_template, clusters):
        ensemble = sample_realizations(bn_template, clusters.inputs, 32, 20, seed=0)
        analytic = analytic_predictions(bn_template, clusters, 32)
        rows = distribution_report(ensemble, analytic)

        assert [(row.layer, row.unit) for row in rows] == [
            (layer, unit) for layer in (1, 2) for unit in range(1, 7)
        ]
        fpc = (128 - 32) / (128 - 1)
        for row in rows:
            assert row.var_mu > 0.0
            assert row.analytic_var_mu_fpc == pytest.approx(row.analytic_var_mu * fpc)

    def test_needs_two_realizations(self, bn_template, clusters):
        ensemble = sample_realizations(bn_template, clusters.inputs, 32, 1, seed=0)
        analytic = analytic_predictions(bn_template, clusters, 32)
        with pytest.raises(EnsembleSizeError):
            distribution_report(ensemble, analytic)

    def test_report_csv(self, tmp_path, bn_template, clusters):
        ensemble = sample_realizations(bn_template, clusters.inputs, 32, 5, seed=0)
        rows = distribution_report(
            ensemble, analytic_predictions(bn_template, clusters, 32)
        )
        path = write_report_csv(tmp_path / "report.csv", rows)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("layer,unit,mean_mu")
        assert len(lines) == 1 + 12


class TestNoiseControlledEnsemble:
    """Test virtual batch sizes."""

    def test_perturbed_realizations(self, bn_template, clusters):
        plain = sample_realizations(bn_template, clusters.inputs, 64, 3, seed=1)
        noisy = noise_controlled_ensemble(bn_template, clusters, 64, 8, 3, seed=1)
        assert len(noisy) == 3
        assert not np.array_equal(
            noisy.realizations[0].mu(1), plain.realizations[0].mu(1)
        )
