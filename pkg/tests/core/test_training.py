"""Tests for initialization, SGD training and gradient checks."""

import numpy as np
import pytest

from splinelens.core.batchnorm import apply_stats, compute_stats
from splinelens.core.datasets import LabeledDataset, make_dataset
from splinelens.core.network import BNMode, glorot_network
from splinelens.core.training import (
    BatchMismatchError,
    InitMode,
    KinkProximityError,
    Loss,
    TrainConfig,
    accuracy,
    active_unit_check,
    compare_initializations,
    comparison_means,
    each_side_check,
    grad_check,
    initialize,
    loss_and_grad,
    train,
    write_history_csv,
)
from splinelens.utils.random import make_rng


@pytest.fixture
def template():
    return glorot_network([2, 8, 8, 1], "leaky", make_rng(0, "network"), alpha=0.1)


def _checked(net, bn, points, labels, **kwargs):
    """Gradient error at the first point that is not near a kink."""
    for x, label in zip(points, labels, strict=True):
        try:
            return grad_check(net, bn, Loss.SOFTMAX_CROSS_ENTROPY, x, label, **kwargs)
        except KinkProximityError:
            continue
    pytest.fail("every point was near a kink")


class TestLosses:
    """Test losses and their output gradients."""

    @pytest.mark.parametrize("loss", list(Loss))
    @pytest.mark.parametrize("width", [1, 3])
    def test_gradient_matches_finite_differences(self, loss, width):
        rng = make_rng(1, "loss", width)
        output = rng.normal(size=(5, width))
        labels = rng.integers(0, max(width, 2), size=5)
        _, grad = loss_and_grad(loss, output, labels)
        step = 1e-6
        numeric = np.zeros_like(output)
        for index in np.ndindex(output.shape):
            plus, minus = output.copy(), output.copy()
            plus[index] += step
            minus[index] -= step
            numeric[index] = (
                loss_and_grad(loss, plus, labels)[0]
                - loss_and_grad(loss, minus, labels)[0]
            ) / (2 * step)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-8)

    def test_accuracy(self):
        assert accuracy(np.array([[1.0], [-1.0], [0.5]]), np.array([1, 0, 0])) == (
            pytest.approx(2 / 3)
        )
        assert accuracy(np.array([[0.0, 1.0], [2.0, 1.0]]), np.array([1, 1])) == 0.5


class TestInitialize:
    """Test the three initialization modes."""

    def test_modes_share_weights(self, template, clusters):
        nets = {
            mode: initialize(template, mode, clusters, seed=3)[0] for mode in InitMode
        }
        for layer in (1, 2, 3):
            np.testing.assert_array_equal(
                nets[InitMode.ZERO_BIAS].weight(layer),
                nets[InitMode.BN_WARMUP].weight(layer),
            )
            np.testing.assert_array_equal(
                nets[InitMode.ZERO_BIAS].weight(layer),
                nets[InitMode.RANDOM_BIAS].weight(layer),
            )
        assert np.all(nets[InitMode.ZERO_BIAS].bias(1) == 0.0)
        assert np.any(nets[InitMode.RANDOM_BIAS].bias(1) != 0.0)

    def test_bn_warmup_uses_the_dataset(self, template, clusters):
        net, bn = initialize(template, InitMode.BN_WARMUP, clusters, seed=0)
        assert net.bn_layers == frozenset({1, 2})
        assert bn.mode is BNMode.BATCH
        stats = compute_stats(net, clusters.inputs)
        np.testing.assert_allclose(bn[1].mu, stats.mu(1))

    def test_bn_warmup_needs_data(self, template):
        with pytest.raises(ValueError, match="needs a dataset"):
            initialize(template, InitMode.BN_WARMUP, None, seed=0)


class TestTrain:
    """Test plain SGD."""

    def test_zero_learning_rate_changes_nothing(self, template, clusters):
        net, bn = initialize(template, InitMode.BN_WARMUP, clusters, seed=0)
        history = train(net, bn, clusters, TrainConfig(learning_rate=0.0, epochs=2))

        assert len(history) == 2
        for layer in (1, 2, 3):
            np.testing.assert_array_equal(history.net.weight(layer), net.weight(layer))
        assert history.loss[0] == history.loss[1]

    def test_frozen_bn_parameters_are_bit_identical(self, template, clusters):
        net, bn = initialize(template, InitMode.BN_WARMUP, clusters, seed=0)
        history = train(net, bn, clusters, TrainConfig(learning_rate=0.1, epochs=2))

        assert not np.array_equal(history.net.weight(1), net.weight(1))
        for layer in (1, 2):
            for name in ("mu", "sigma", "gamma", "beta"):
                np.testing.assert_array_equal(
                    getattr(history.bn[layer], name), getattr(bn[layer], name)
                )

    def test_unfrozen_bn_refreshes_statistics(self, template, clusters):
        net, bn = initialize(template, InitMode.BN_WARMUP, clusters, seed=0)
        config = TrainConfig(learning_rate=0.1, epochs=1, bn_frozen=False)
        history = train(net, bn, clusters, config)
        stats = compute_stats(history.net, clusters.inputs, bn=history.bn)
        np.testing.assert_allclose(history.bn[1].mu, stats.mu(1))

    def test_same_seed_same_result(self, template, clusters):
        net, bn = initialize(template, InitMode.RANDOM_BIAS, clusters, seed=0)
        config = TrainConfig(learning_rate=0.1, epochs=2, seed=4)
        first = train(net, bn, clusters, config)
        second = train(net, bn, clusters, config)
        np.testing.assert_array_equal(first.net.weight(2), second.net.weight(2))
        assert first.loss == second.loss

    def test_snapshots_and_history_csv(self, tmp_path, template, clusters):
        net, bn = initialize(template, InitMode.ZERO_BIAS, clusters, seed=0)
        config = TrainConfig(learning_rate=0.1, epochs=4, snapshot_every=2)
        history = train(net, bn, clusters, config, holdout=clusters)

        assert sorted(history.snapshots) == [0, 2, 4]
        assert history.holdout_accuracy == history.accuracy
        lines = write_history_csv(tmp_path / "history.csv", history).read_text()
        assert lines.splitlines()[0] == "epoch,loss,acc,holdout_acc"
        assert len(lines.splitlines()) == 5

    def test_zero_epochs(self, template, clusters):
        net, bn = initialize(template, InitMode.ZERO_BIAS, clusters, seed=0)
        history = train(net, bn, clusters, TrainConfig(epochs=0))
        assert len(history) == 0
        np.testing.assert_array_equal(history.net.weight(1), net.weight(1))

    @pytest.mark.parametrize(
        "kwargs", [{"learning_rate": -1.0}, {"epochs": -1}, {"batch_size": 0}]
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_needs_labels(self, template, star_points):
        net, bn = initialize(template, InitMode.ZERO_BIAS, None, seed=0)
        with pytest.raises(ValueError, match="labeled"):
            train(net, bn, LabeledDataset(star_points), TrainConfig(epochs=1))


class TestGradientCheck:
    """Test analytic gradients against central differences."""

    def test_plain_network(self, leaky_net, clusters):
        error = _checked(leaky_net, None, clusters.inputs, clusters.labels)
        assert error <= 1e-5

    def test_fixed_bn_statistics(self, template, clusters):
        net, bn = initialize(template, InitMode.BN_WARMUP, clusters, seed=1)
        error = _checked(net, bn, clusters.inputs, clusters.labels)
        assert error <= 1e-5

    def test_batch_statistics(self, template, clusters):
        net, bn = initialize(template, InitMode.BN_WARMUP, clusters, seed=2)
        for start in range(0, 64, 8):
            rows = slice(start, start + 8)
            try:
                error = grad_check(
                    net,
                    bn,
                    Loss.SOFTMAX_CROSS_ENTROPY,
                    clusters.inputs[rows],
                    clusters.labels[rows],
                    batch_stats=True,
                )
            except KinkProximityError:
                continue
            assert error <= 1e-5
            return
        pytest.fail("every batch was near a kink")

    def test_kink_is_refused(self, cross_net):
        with pytest.raises(KinkProximityError):
            grad_check(cross_net, None, Loss.HINGE, np.array([0.0, 1.0]), 1)


class TestEachSide:
    """Test that BN mini-batches straddle every output and unit."""

    def _width_one_net(self, batch):
        net = glorot_network(
            [2, 5, 1, 2], "leaky", make_rng(9, "network"), alpha=0.1, bn_layers=(1, 2)
        )
        return net, apply_stats(net, compute_stats(net, batch))

    def test_width_one_penultimate_layer(self):
        batch = make_rng(0, "batch").normal(size=(16, 2))
        net, bn = self._width_one_net(batch)
        assert np.all(each_side_check(net, bn, batch))
        for straddles in active_unit_check(net, bn, batch).values():
            assert np.all(straddles)

    def test_single_point_never_straddles(self):
        batch = make_rng(0, "batch").normal(size=(16, 2))
        net, bn = self._width_one_net(batch)
        assert not np.any(each_side_check(net, bn, batch[:1]))

    def test_statistics_must_come_from_the_batch(self):
        batch = make_rng(0, "batch").normal(size=(16, 2))
        net, bn = self._width_one_net(batch)
        with pytest.raises(BatchMismatchError):
            each_side_check(net, bn, batch[:8])


class TestCompareInitializations:
    """Test paired-seed comparisons."""

    def test_rows_and_means(self, clusters):
        template = glorot_network([2, 4, 1], "leaky", make_rng(0), alpha=0.1)
        rows = compare_initializations(
            template, clusters, [0, 1], [0.01, 0.1], epochs=1, threads=2
        )
        assert [(row.mode, row.seed) for row in rows] == [
            (InitMode.BN_WARMUP, 0),
            (InitMode.BN_WARMUP, 1),
            (InitMode.ZERO_BIAS, 0),
            (InitMode.ZERO_BIAS, 1),
        ]
        assert all(row.learning_rate in (0.01, 0.1) for row in rows)
        means = comparison_means(rows)
        assert set(means) == {InitMode.BN_WARMUP, InitMode.ZERO_BIAS}

    def test_one_learning_rate_per_mode(self, clusters):
        template = glorot_network([2, 4, 1], "leaky", make_rng(0), alpha=0.1)
        rates = [0.01, 0.1, 0.5]
        rows = compare_initializations(template, clusters, [0, 1, 2], rates, epochs=2)
        for mode in (InitMode.BN_WARMUP, InitMode.ZERO_BIAS):
            chosen = {row.learning_rate for row in rows if row.mode is mode}
            assert len(chosen) == 1

            mean_loss = [
                comparison_means(
                    compare_initializations(
                        template, clusters, [0, 1, 2], [rate], epochs=2, modes=[mode]
                    )
                )[mode]
                for rate in rates
            ]
            assert chosen == {rates[int(np.argmin(mean_loss))]}

    @pytest.mark.slow
    def test_both_modes_learn_separable_clusters(self, clusters):
        template = glorot_network([2, 8, 8, 1], "leaky", make_rng(0), alpha=0.1)
        rows = compare_initializations(
            template, clusters, [0, 1, 2], [0.05, 0.2], epochs=30, threads=2
        )
        assert all(row.final_accuracy >= 0.8 for row in rows)

    @pytest.mark.slow
    @pytest.mark.timeout(1200)
    def test_bn_warmup_reaches_lower_loss_on_rings(self):
        rings = make_dataset("rings", 200, 0, noise=0.1)
        template = glorot_network([2, 16, 16, 1], "leaky", make_rng(0), alpha=0.1)
        rows = compare_initializations(
            template, rings, range(10), [0.01, 0.05, 0.2], epochs=20, threads=4
        )
        means = comparison_means(rows)
        assert means[InitMode.BN_WARMUP] < means[InitMode.ZERO_BIAS]
