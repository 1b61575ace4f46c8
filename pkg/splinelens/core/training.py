"""Desk-scale SGD training with hand-written backpropagation.

Three initializations are compared: zero biases, random biases, and BN
warm-up (statistics of the full training set computed layer by layer, then
frozen). Training is plain mini-batch SGD. BN layers either treat their
statistics as constants (frozen) or recompute them on every mini-batch and
backpropagate through the batch mean and variance.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import numpy as np

from ..utils.parallel import ordered_map
from ..utils.random import make_rng
from ..utils.reports import write_csv
from .batchnorm import DegenerateStatisticError, StatsSource, apply_stats, compute_stats
from .datasets import LabeledDataset
from .network import (
    Activation,
    BNLayer,
    BNState,
    NetworkSpec,
    activate,
    activation_derivative,
    check_compatible,
    forward,
    glorot_weights,
)

logger = logging.getLogger(__name__)

FD_STEP = 1e-5


class TrainingDivergedError(ArithmeticError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"Training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class KinkProximityError(ValueError):
    """Raised when a gradient-check point sits too close to an activation kink.

    Callers retry with another point.
    """

    pass


class BatchMismatchError(ValueError):
    """Raised when BN statistics were not computed from the given mini-batch."""

    pass


class InitMode(StrEnum):
    ZERO_BIAS = "zero_bias"
    RANDOM_BIAS = "random_bias"
    BN_WARMUP = "bn_warmup"


class Loss(StrEnum):
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"
    HINGE = "hinge"
    SQUARED = "squared"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``bn_frozen`` defaults to True; it only matters for networks with BN.
    """

    init_mode: InitMode = InitMode.BN_WARMUP
    learning_rate: float = 0.05
    epochs: int = 20
    batch_size: int = 32
    loss: Loss = Loss.SOFTMAX_CROSS_ENTROPY
    seed: int = 0
    bn_frozen: bool = True
    eps_bn: float = 0.0
    snapshot_every: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        object.__setattr__(self, "loss", Loss(self.loss))
        if not self.learning_rate >= 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0 or self.batch_size < 1 or self.snapshot_every < 0:
            raise ValueError("epochs and snapshot_every must be >= 0, batch_size >= 1")


@dataclass
class TrainHistory:
    """Per-epoch metrics, snapshots and the trained parameters."""

    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    holdout_accuracy: list[float | None] = field(default_factory=list)
    snapshots: dict[int, tuple[NetworkSpec, BNState | None]] = field(
        default_factory=dict
    )
    net: NetworkSpec | None = None
    bn: BNState | None = None

    def __len__(self) -> int:
        return len(self.loss)


# Parameters


@dataclass
class _Params:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gammas: dict[int, np.ndarray]
    betas: dict[int, np.ndarray]

    @classmethod
    def from_net(cls, net: NetworkSpec, bn: BNState | None) -> "_Params":
        bn = check_compatible(net, bn)
        return cls(
            weights=[np.array(W) for W in net.weights],
            biases=[np.array(c) for c in net.biases],
            gammas={layer: np.array(bn[layer].gamma) for layer in net.bn_layers},
            betas={layer: np.array(bn[layer].beta) for layer in net.bn_layers},
        )

    def named(self, net: NetworkSpec, include_bn: bool) -> dict[str, np.ndarray]:
        arrays = {}
        for layer in range(1, net.depth + 1):
            arrays[f"W{layer}"] = self.weights[layer - 1]
            if layer in net.bn_layers:
                if include_bn:
                    arrays[f"gamma{layer}"] = self.gammas[layer]
                    arrays[f"beta{layer}"] = self.betas[layer]
            else:
                arrays[f"c{layer}"] = self.biases[layer - 1]
        return arrays

    def to_net(
        self, net: NetworkSpec, bn: BNState | None
    ) -> tuple[NetworkSpec, BNState | None]:
        trained = NetworkSpec.build(
            self.weights,
            self.biases,
            activation=net.activation,
            alpha=net.alpha if net.activation is Activation.LEAKY else None,
            bn_layers=net.bn_layers,
        )
        if not net.bn_layers:
            return trained, bn
        layers = {
            layer: BNLayer(
                mu=bn[layer].mu,
                sigma=bn[layer].sigma,
                gamma=self.gammas[layer],
                beta=self.betas[layer],
            )
            for layer in net.bn_layers
        }
        return trained, BNState(layers=layers, mode=bn.mode)


@dataclass
class _LayerCache:
    z_prev: np.ndarray
    h: np.ndarray
    xhat: np.ndarray | None = None
    sigma: np.ndarray | None = None


def _forward_train(
    net: NetworkSpec,
    params: _Params,
    bn: BNState | None,
    X: np.ndarray,
    batch_stats: bool,
    eps_bn: float = 0.0,
) -> tuple[np.ndarray, list[_LayerCache]]:
    z = X
    caches = []
    for layer in range(1, net.depth + 1):
        W = params.weights[layer - 1]
        u = z @ W.T
        if layer in net.bn_layers:
            if batch_stats:
                mu = u.mean(axis=0)
                sigma = np.sqrt(((u - mu) ** 2).mean(axis=0))
                if eps_bn > 0.0:
                    sigma = np.maximum(sigma, eps_bn)
                elif np.any(degenerate := sigma <= 1e-12 * (1.0 + np.abs(mu))):
                    unit = int(np.flatnonzero(degenerate)[0]) + 1
                    raise DegenerateStatisticError(layer, unit)
            else:
                mu, sigma = bn[layer].mu, bn[layer].sigma
            xhat = (u - mu) / sigma
            h = params.gammas[layer] * xhat + params.betas[layer]
            caches.append(_LayerCache(z_prev=z, h=h, xhat=xhat, sigma=sigma))
        else:
            h = u + params.biases[layer - 1]
            caches.append(_LayerCache(z_prev=z, h=h))
        z = h if layer == net.depth else activate(h, net.alpha)
    return z, caches


def _backward(
    net: NetworkSpec,
    params: _Params,
    caches: list[_LayerCache],
    dout: np.ndarray,
    batch_stats: bool,
) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    dh = dout
    for layer in range(net.depth, 0, -1):
        cache = caches[layer - 1]
        if layer in net.bn_layers:
            grads[f"gamma{layer}"] = np.sum(dh * cache.xhat, axis=0)
            grads[f"beta{layer}"] = np.sum(dh, axis=0)
            dxhat = dh * params.gammas[layer]
            if batch_stats:
                du = (
                    dxhat
                    - dxhat.mean(axis=0)
                    - cache.xhat * np.mean(dxhat * cache.xhat, axis=0)
                ) / cache.sigma
            else:
                du = dxhat / cache.sigma
        else:
            grads[f"c{layer}"] = np.sum(dh, axis=0)
            du = dh
        grads[f"W{layer}"] = du.T @ cache.z_prev
        if layer > 1:
            dz = du @ params.weights[layer - 1]
            dh = dz * activation_derivative(caches[layer - 2].h, net.alpha)
    return grads


# Losses


def _signed(labels: np.ndarray) -> np.ndarray:
    return np.where(labels > 0, 1.0, -1.0)


def loss_and_grad(
    loss: Loss | str, output: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient with respect to ``output``.

    A width-1 head is a binary classifier with labels in {0, 1}: the
    cross-entropy is logistic, hinge and squared use targets -1/+1. Wider
    heads use softmax cross-entropy, the multiclass hinge and one-hot
    squared error.
    """
    loss = Loss(loss)
    n, width = output.shape
    labels = np.asarray(labels, dtype=np.int64)
    if width == 1:
        f = output[:, 0]
        y = _signed(labels)
        if loss is Loss.SOFTMAX_CROSS_ENTROPY:
            margin = y * f
            value = np.mean(np.logaddexp(0.0, -margin))
            grad = -y * np.exp(-np.logaddexp(0.0, margin)) / n
        elif loss is Loss.HINGE:
            value = np.mean(np.maximum(0.0, 1.0 - y * f))
            grad = np.where(y * f < 1.0, -y, 0.0) / n
        else:
            value = 0.5 * np.mean((f - y) ** 2)
            grad = (f - y) / n
        return float(value), grad[:, None]

    onehot = np.zeros_like(output)
    onehot[np.arange(n), labels] = 1.0
    if loss is Loss.SOFTMAX_CROSS_ENTROPY:
        shifted = output - output.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
        value = -np.mean(log_probs[np.arange(n), labels])
        grad = (np.exp(log_probs) - onehot) / n
    elif loss is Loss.HINGE:
        margins = 1.0 + output - output[np.arange(n), labels][:, None]
        margins[np.arange(n), labels] = 0.0
        active = margins > 0.0
        value = np.mean(np.sum(np.maximum(margins, 0.0), axis=1))
        grad = active.astype(np.float64)
        grad[np.arange(n), labels] = -active.sum(axis=1)
        grad /= n
    else:
        value = 0.5 * np.mean(np.sum((output - onehot) ** 2, axis=1))
        grad = (output - onehot) / n
    return float(value), grad


def accuracy(output: np.ndarray, labels: np.ndarray) -> float:
    if output.shape[1] == 1:
        predicted = (output[:, 0] >= 0.0).astype(np.int64)
    else:
        predicted = np.argmax(output, axis=1)
    return float(np.mean(predicted == np.asarray(labels)))


# Initialization


def initial_biases(
    widths: Sequence[int], mode: InitMode | str, seed: int
) -> list[np.ndarray]:
    """Biases of every layer: Glorot-uniform from ``(seed, "init", "bias")``
    for ``random_bias``, zero otherwise."""
    if InitMode(mode) is not InitMode.RANDOM_BIAS:
        return [np.zeros(width) for width in widths[1:]]
    rng = make_rng(seed, "init", "bias")
    limits = [
        np.sqrt(6.0 / (fan_in + fan_out))
        for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True)
    ]
    return [
        rng.uniform(-limit, limit, fan_out)
        for limit, fan_out in zip(limits, widths[1:], strict=True)
    ]


def initialize(
    template: NetworkSpec,
    mode: InitMode | str,
    dataset: LabeledDataset | np.ndarray | None,
    seed: int,
    eps_bn: float = 0.0,
) -> tuple[NetworkSpec, BNState | None]:
    """Draw a network with ``template``'s architecture.

    Weights are Glorot-uniform from the substream ``(seed, "init", "weights")``
    and therefore identical across modes for the same seed.

    Raises:
        ValueError: If ``bn_warmup`` has no dataset.
        DegenerateStatisticError: If warm-up statistics are degenerate.
    """
    mode = InitMode(mode)
    widths = template.widths
    weight_rng = make_rng(seed, "init", "weights")
    weights = [
        glorot_weights(fan_out, fan_in, weight_rng)
        for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True)
    ]
    biases = initial_biases(widths, mode, seed)
    alpha = template.alpha if template.activation is Activation.LEAKY else None
    bn_layers = range(1, template.depth) if mode is InitMode.BN_WARMUP else ()
    net = NetworkSpec.build(
        weights,
        biases,
        activation=template.activation,
        alpha=alpha,
        bn_layers=bn_layers,
    )
    if mode is not InitMode.BN_WARMUP or not net.bn_layers:
        return net, None
    if dataset is None:
        raise ValueError("bn_warmup initialization needs a dataset")
    X = dataset.inputs if isinstance(dataset, LabeledDataset) else np.asarray(dataset)
    stats = compute_stats(net, X, eps_bn=eps_bn, source=StatsSource.FULL_TRAINING_SET)
    return net, apply_stats(net, stats)


# Training


def _evaluate(
    net: NetworkSpec,
    params: _Params,
    bn: BNState | None,
    X: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
) -> tuple[float, float]:
    """Loss and accuracy on a full set; unfrozen BN uses full-set statistics."""
    output, _ = _forward_train(
        net, params, bn, X, batch_stats=bool(net.bn_layers) and not config.bn_frozen,
        eps_bn=config.eps_bn,
    )
    value, _ = loss_and_grad(config.loss, output, labels)
    return value, accuracy(output, labels)


def train(
    net: NetworkSpec,
    bn: BNState | None,
    dataset: LabeledDataset,
    config: TrainConfig,
    holdout: LabeledDataset | None = None,
) -> TrainHistory:
    """Plain mini-batch SGD.

    Mini-batch order per epoch comes from the substream ``(seed, "epoch", e)``.
    Metrics are measured on the whole training set after every epoch. With
    frozen BN only weights and non-BN biases are updated, so ``mu``, ``sigma``,
    ``gamma`` and ``beta`` leave training bit-identical.

    Raises:
        TrainingDivergedError: When the loss becomes NaN or infinite.
    """
    if dataset.labels is None:
        raise ValueError("Training needs a labeled dataset")
    bn = check_compatible(net, bn) if net.bn_layers else bn
    params = _Params.from_net(net, bn)
    batch_stats = bool(net.bn_layers) and not config.bn_frozen
    X, labels = dataset.inputs, dataset.labels
    history = TrainHistory()
    if config.snapshot_every:
        history.snapshots[0] = (net, bn)

    for epoch in range(1, config.epochs + 1):
        order = make_rng(config.seed, "epoch", epoch).permutation(len(dataset))
        for start in range(0, len(order), config.batch_size):
            rows = order[start : start + config.batch_size]
            if batch_stats and rows.shape[0] < 2:
                continue
            output, caches = _forward_train(
                net, params, bn, X[rows], batch_stats, config.eps_bn
            )
            value, dout = loss_and_grad(config.loss, output, labels[rows])
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, value)
            grads = _backward(net, params, caches, dout, batch_stats)
            for name, array in params.named(net, include_bn=batch_stats).items():
                array -= config.learning_rate * grads[name]

        value, acc = _evaluate(net, params, bn, X, labels, config)
        if not np.isfinite(value):
            logger.error("Training diverged at epoch %d", epoch)
            raise TrainingDivergedError(epoch, value)
        history.loss.append(value)
        history.accuracy.append(acc)
        holdout_acc = None
        if holdout is not None and holdout.labels is not None:
            _, holdout_acc = _evaluate(
                net, params, bn, holdout.inputs, holdout.labels, config
            )
        history.holdout_accuracy.append(holdout_acc)
        if config.snapshot_every and epoch % config.snapshot_every == 0:
            history.snapshots[epoch] = params.to_net(net, bn)
        logger.debug("Epoch %d: loss=%.6g acc=%.4f", epoch, value, acc)

    history.net, history.bn = params.to_net(net, bn)
    if batch_stats:
        stats = compute_stats(
            history.net, X, bn=history.bn, eps_bn=config.eps_bn,
            source=StatsSource.FULL_TRAINING_SET,
        )
        history.bn = apply_stats(history.net, stats, base=history.bn)
    return history


def write_history_csv(path: Path, history: TrainHistory) -> Path:
    rows = (
        (epoch, loss, acc, holdout)
        for epoch, (loss, acc, holdout) in enumerate(
            zip(history.loss, history.accuracy, history.holdout_accuracy, strict=True),
            start=1,
        )
    )
    return write_csv(Path(path), ("epoch", "loss", "acc", "holdout_acc"), rows)


# Verification


def grad_check(
    net: NetworkSpec,
    bn: BNState | None,
    loss: Loss | str,
    x: np.ndarray,
    label: int | np.ndarray,
    step: float = FD_STEP,
    kink_margin: float = 1e-3,
    batch_stats: bool = False,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error of each parameter array is ``||g - g_fd|| / (||g|| + ||g_fd||)``.
    ``x`` may be a single input or a batch; ``batch_stats`` recomputes BN
    statistics from that batch in every evaluation. Parameters are all
    weights, non-BN biases, and BN gamma/beta.

    Raises:
        KinkProximityError: If a hidden pre-activation lies within
            ``max(kink_margin, 10 * step)`` of zero.
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    params = _Params.from_net(net, bn)
    output, caches = _forward_train(net, params, bn, X, batch_stats)
    margin = max(kink_margin, 10.0 * step)
    for layer, cache in enumerate(caches[:-1], start=1):
        if np.min(np.abs(cache.h)) < margin:
            raise KinkProximityError(
                f"Pre-activation of layer {layer} within {margin:g} of a kink; "
                "retry with another point"
            )
    _, dout = loss_and_grad(loss, output, labels)
    analytic = _backward(net, params, caches, dout, batch_stats)

    def objective() -> float:
        out, _ = _forward_train(net, params, bn, X, batch_stats)
        return loss_and_grad(loss, out, labels)[0]

    worst = 0.0
    for name, array in params.named(net, include_bn=True).items():
        numeric = np.zeros_like(array)
        for index in np.ndindex(array.shape):
            original = array[index]
            array[index] = original + step
            plus = objective()
            array[index] = original - step
            minus = objective()
            array[index] = original
            numeric[index] = (plus - minus) / (2.0 * step)
        scale = np.linalg.norm(analytic[name]) + np.linalg.norm(numeric)
        if scale > 0.0:
            worst = max(worst, float(np.linalg.norm(analytic[name] - numeric) / scale))
    return worst


def _check_minibatch_stats(
    net: NetworkSpec, bn: BNState, minibatch: np.ndarray
) -> None:
    stats = compute_stats(net, minibatch, bn=bn)
    for layer in net.bn_layers:
        if not (
            np.allclose(stats.mu(layer), bn[layer].mu, rtol=1e-9, atol=1e-12)
            and np.allclose(stats.sigma(layer), bn[layer].sigma, rtol=1e-9, atol=1e-12)
        ):
            raise BatchMismatchError(
                f"BN statistics of layer {layer} were not computed from this mini-batch"
            )


def each_side_check(
    net: NetworkSpec, bn: BNState | None, minibatch: np.ndarray
) -> np.ndarray:
    """Per output unit: does the mini-batch have outputs strictly on both sides?

    A mini-batch of one point never straddles. Nonzero ``c_L`` or a
    non-leaky activation is outside the guaranteed setting; the check is
    still evaluated.

    Raises:
        BatchMismatchError: If BN statistics do not come from ``minibatch``.
    """
    X = np.atleast_2d(np.asarray(minibatch, dtype=np.float64))
    width = net.widths[-1]
    if X.shape[0] < 2:
        return np.zeros(width, dtype=bool)
    if net.bn_layers:
        _check_minibatch_stats(net, check_compatible(net, bn), X)
    if net.activation is not Activation.LEAKY or np.any(net.bias(net.depth) != 0.0):
        logger.debug("each_side_check outside its guaranteed setting")
    h = forward(net, bn, X).output
    return np.any(h > 0.0, axis=0) & np.any(h < 0.0, axis=0)


def active_unit_check(
    net: NetworkSpec, bn: BNState | None, minibatch: np.ndarray
) -> dict[int, np.ndarray]:
    """Per BN layer and unit: does the mini-batch straddle the unit's kink?"""
    X = np.atleast_2d(np.asarray(minibatch, dtype=np.float64))
    trace = forward(net, bn, X, upto=max(net.bn_layers, default=0))
    return {
        layer: np.any(trace.pre[layer - 1] > 0.0, axis=0)
        & np.any(trace.pre[layer - 1] < 0.0, axis=0)
        for layer in sorted(net.bn_layers)
    }


@dataclass(frozen=True)
class InitComparisonRow:
    mode: InitMode
    seed: int
    learning_rate: float
    final_loss: float
    final_accuracy: float


def compare_initializations(
    template: NetworkSpec,
    dataset: LabeledDataset,
    seeds: Sequence[int],
    learning_rates: Sequence[float],
    epochs: int = 20,
    batch_size: int = 32,
    loss: Loss | str = Loss.SOFTMAX_CROSS_ENTROPY,
    modes: Sequence[InitMode | str] = (InitMode.BN_WARMUP, InitMode.ZERO_BIAS),
    threads: int = 1,
) -> list[InitComparisonRow]:
    """Paired-seed comparison with one learning rate per mode.

    Every mode trains at every rate on every seed. A mode keeps the rate with
    the lowest mean final loss over the seeds (the first rate on ties), and
    its rows report the runs at that rate. Runs that diverge count as
    infinite loss.
    """
    modes = [InitMode(mode) for mode in modes]
    jobs = [
        (mode, seed, rate)
        for mode in modes
        for seed in seeds
        for rate in learning_rates
    ]

    def run(job: tuple[InitMode, int, float]) -> tuple[float, float]:
        mode, seed, rate = job
        net, bn = initialize(template, mode, dataset, seed)
        config = TrainConfig(
            init_mode=mode,
            learning_rate=rate,
            epochs=epochs,
            batch_size=batch_size,
            loss=loss,
            seed=seed,
        )
        try:
            history = train(net, bn, dataset, config)
        except TrainingDivergedError as e:
            logger.warning("%s seed %d lr %g: %s", mode, seed, rate, e)
            return np.inf, 0.0
        if not epochs:
            return np.inf, 0.0
        return history.loss[-1], history.accuracy[-1]

    finals = dict(zip(jobs, ordered_map(run, jobs, threads), strict=True))
    rows = []
    for mode in modes:
        mean_loss = [
            np.mean([finals[mode, seed, rate][0] for seed in seeds])
            for rate in learning_rates
        ]
        rate = learning_rates[int(np.argmin(mean_loss))]
        for seed in seeds:
            final_loss, final_accuracy = finals[mode, seed, rate]
            rows.append(
                InitComparisonRow(
                    mode, seed, rate, float(final_loss), float(final_accuracy)
                )
            )
    return rows


def comparison_means(rows: Sequence[InitComparisonRow]) -> dict[InitMode, float]:
    means: dict[InitMode, list[float]] = {}
    for row in rows:
        means.setdefault(row.mode, []).append(row.final_loss)
    return {mode: float(np.mean(values)) for mode, values in means.items()}
