"""Batch-normalization statistics and their sampling variability.

Statistics are computed layer by layer: the batch is pushed through layers
1..l-1 using the statistics already computed for those layers, then ``mu_l``
and ``sigma_l`` are the mean and the (1/|B|) population standard deviation of
``W_l z_{l-1}`` over the batch.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path

import numpy as np
from scipy import stats as sps

from ..utils.parallel import ordered_map
from ..utils.random import make_rng
from ..utils.reports import write_csv
from .network import (
    BNLayer,
    BNMode,
    BNState,
    NetworkError,
    NetworkSpec,
    activate,
    check_compatible,
    forward,
    layer_affine,
)

logger = logging.getLogger(__name__)

# Relative size below which a standard deviation is treated as exactly zero.
ZERO_SIGMA_RTOL = 1e-12


class DegenerateStatisticError(ArithmeticError):
    """Raised when a BN unit has (numerically) zero variance and no floor."""

    def __init__(self, layer: int, unit: int, message: str | None = None):
        super().__init__(
            message
            or f"Degenerate BN statistic at layer {layer}, unit {unit}: zero variance "
            "over the batch (set a positive eps_bn to apply a floor)"
        )
        self.layer = layer
        self.unit = unit


class BatchSizeError(ValueError):
    """Raised for batch sizes a formula or sampler cannot use."""

    pass


class StatsSource(StrEnum):
    MINIBATCH = "minibatch"
    FULL_TRAINING_SET = "full_training_set"


@dataclass(frozen=True, eq=False)
class LayerStats:
    """Statistics of one BN layer over one batch.

    ``input_var`` is the plug-in ``<w_k^2, rho>`` (rho the per-dimension batch
    variance of the layer input) and ``phi4`` the batch fourth central moment
    of ``<w_k, z>``; both feed the noise-controlled perturbation.
    """

    mu: np.ndarray
    sigma: np.ndarray
    input_var: np.ndarray
    phi4: np.ndarray


@dataclass(frozen=True, eq=False)
class BatchStats:
    """Per-layer statistics plus where they came from."""

    layers: dict[int, LayerStats]
    source: StatsSource
    batch_size: int
    batch_id: int | None = None

    def mu(self, layer: int) -> np.ndarray:
        return self.layers[layer].mu

    def sigma(self, layer: int) -> np.ndarray:
        return self.layers[layer].sigma

    def to_bn(self, base: BNState | None = None) -> BNState:
        """BN state using these statistics and ``base``'s gamma/beta."""
        layers = {}
        for layer, stats in self.layers.items():
            gamma = beta = None
            if base is not None and layer in base:
                gamma, beta = base[layer].gamma, base[layer].beta
            layers[layer] = BNLayer.from_stats(stats.mu, stats.sigma, gamma, beta)
        return BNState(layers=layers, mode=BNMode.BATCH)


@dataclass(frozen=True, eq=False)
class VariancePrediction:
    """Predicted sampling variance of mu and sigma^2 for one or more units."""

    var_mu: np.ndarray
    var_sigma2: np.ndarray
    input_var: np.ndarray
    phi4: np.ndarray
    batch_size: int


@dataclass(frozen=True, eq=False)
class JitterEnsemble:
    """BN statistics realized over resampled mini-batches.

    ``boundaries`` holds one decision-boundary segment array per realization
    when the ensemble was built with partition tracing; ``skipped`` lists
    draws dropped for degenerate statistics.
    """

    realizations: tuple[BatchStats, ...]
    seed: int
    batch_size: int
    n_draws: int
    boundaries: tuple[np.ndarray, ...] | None = None
    skipped: tuple[int, ...] = field(default_factory=tuple)
    population_size: int | None = None

    def __len__(self) -> int:
        return len(self.realizations)


def _population_moments(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu = u.mean(axis=0)
    centered = u - mu
    var = (centered**2).mean(axis=0)
    phi4 = (centered**4).mean(axis=0)
    return mu, var, phi4


def _accept_sigma(
    layer: int, mu: np.ndarray, var: np.ndarray, eps_bn: float
) -> np.ndarray:
    sigma = np.sqrt(var)
    if eps_bn > 0.0:
        floored = sigma < eps_bn
        if np.any(floored):
            logger.info(
                "Applied sigma floor %g to %d unit(s) of layer %d",
                eps_bn,
                int(floored.sum()),
                layer,
            )
        return np.maximum(sigma, eps_bn)
    zero = sigma <= ZERO_SIGMA_RTOL * (1.0 + np.abs(mu))
    if np.any(zero):
        unit = int(np.flatnonzero(zero)[0]) + 1
        raise DegenerateStatisticError(layer, unit)
    return sigma


def compute_stats(
    net: NetworkSpec,
    batch: np.ndarray,
    bn: BNState | None = None,
    eps_bn: float = 0.0,
    mode: str = "population",
    source: StatsSource = StatsSource.MINIBATCH,
    batch_id: int | None = None,
) -> BatchStats:
    """Compute BN statistics of every BN layer over ``batch``.

    Args:
        net: Network with at least one BN layer.
        batch: Input rows, shape (n, D_0).
        bn: Optional BN state supplying gamma/beta (defaults 1/0).
        eps_bn: Sigma floor; 0 turns zero variance into an error.
        mode: Only ``"population"`` (1/|B| variance) is supported.
        source: Provenance recorded on the result.
        batch_id: Draw index for mini-batch provenance.

    Raises:
        DegenerateStatisticError: On zero variance with ``eps_bn == 0``.
    """
    if mode != "population":
        raise ValueError(f"Unsupported statistics mode '{mode}'")
    if not net.bn_layers:
        raise NetworkError("compute_stats needs a network with BN layers")
    z = np.asarray(batch, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0 or z.shape[1] != net.input_dim:
        raise NetworkError(
            f"Batch must have shape (n >= 1, {net.input_dim}), got {z.shape}"
        )
    batch_size = z.shape[0]

    layers: dict[int, LayerStats] = {}
    last = max(net.bn_layers)
    for layer in range(1, last + 1):
        W = net.weight(layer)
        u = z @ W.T
        if layer in net.bn_layers:
            mu, var, phi4 = _population_moments(u)
            sigma = _accept_sigma(layer, mu, var, eps_bn)
            input_var = (W**2) @ z.var(axis=0)
            layers[layer] = LayerStats(
                mu=mu, sigma=sigma, input_var=input_var, phi4=phi4
            )
            gamma, beta = np.ones_like(mu), np.zeros_like(mu)
            if bn is not None and layer in bn:
                gamma, beta = bn[layer].gamma, bn[layer].beta
            h = (u - mu) / sigma * gamma + beta
        else:
            scale, shift = layer_affine(net, None, layer)
            h = u * scale + shift
        z = activate(h, net.alpha)
    return BatchStats(
        layers=layers,
        source=StatsSource(source),
        batch_size=batch_size,
        batch_id=batch_id,
    )


def apply_stats(
    net: NetworkSpec, stats: BatchStats, base: BNState | None = None
) -> BNState:
    """Return a batch-mode BN state for ``net`` built from ``stats``."""
    bn = stats.to_bn(base)
    return check_compatible(net, bn)


def variance_prediction(
    w: np.ndarray, rho: np.ndarray, phi4: float | np.ndarray, batch_size: int
) -> VariancePrediction:
    """Predicted var(mu) and var(sigma^2) of a BN unit.

    ``var_mu = <w^2, rho> / |B|`` and
    ``var_sigma2 = (phi4 - <w^2, rho>^2 (|B| - 3) / (|B| - 1)) / |B|``.

    ``w`` may be a single row or a matrix of rows (one prediction per row).
    """
    if batch_size < 2:
        raise BatchSizeError(f"batch_size must be >= 2, got {batch_size}")
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0.0):
        raise ValueError("rho must be elementwise non-negative")
    w = np.asarray(w, dtype=np.float64)
    input_var = (w**2) @ rho
    phi4 = np.asarray(phi4, dtype=np.float64)
    n = float(batch_size)
    var_mu = input_var / n
    var_sigma2 = (phi4 - input_var**2 * (n - 3.0) / (n - 1.0)) / n
    return VariancePrediction(
        var_mu=np.asarray(var_mu),
        var_sigma2=np.asarray(var_sigma2),
        input_var=np.asarray(input_var),
        phi4=phi4,
        batch_size=batch_size,
    )


def layer_variance_prediction(
    net: NetworkSpec,
    bn: BNState,
    layer: int,
    population: np.ndarray,
    batch_size: int,
) -> VariancePrediction:
    """Predictions for every unit of ``layer``, moments taken over ``population``."""
    if layer == 1:
        z = np.asarray(population, dtype=np.float64)
    else:
        z = forward(net, bn, population, upto=layer - 1).post[-1]
    W = net.weight(layer)
    _, _, phi4 = _population_moments(z @ W.T)
    return variance_prediction(W, z.var(axis=0), phi4, batch_size)


def _draw_indices(seed: int, draw: int, population: int, batch_size: int) -> np.ndarray:
    rng = make_rng(seed, "minibatch", draw)
    return np.sort(rng.choice(population, size=batch_size, replace=False))


def sample_realizations(
    net: NetworkSpec,
    dataset: np.ndarray,
    batch_size: int,
    n_draws: int,
    seed: int,
    bn: BNState | None = None,
    eps_bn: float = 0.0,
    threads: int = 1,
    skip_degenerate: bool = False,
) -> JitterEnsemble:
    """Statistics of ``n_draws`` mini-batches drawn without replacement.

    Draw ``i`` uses the substream ``(seed, "minibatch", i)``, so results are
    identical for any thread count.
    """
    X = np.asarray(dataset, dtype=np.float64)
    if batch_size > X.shape[0]:
        raise BatchSizeError(
            f"batch_size {batch_size} exceeds dataset size {X.shape[0]}"
        )
    if batch_size < 1 or n_draws < 1:
        raise BatchSizeError("batch_size and n_draws must be >= 1")

    def draw(index: int) -> BatchStats | None:
        rows = _draw_indices(seed, index, X.shape[0], batch_size)
        try:
            return compute_stats(net, X[rows], bn=bn, eps_bn=eps_bn, batch_id=index)
        except DegenerateStatisticError as e:
            if not skip_degenerate:
                raise
            logger.warning("Skipping draw %d: %s", index, e)
            return None

    results = ordered_map(draw, range(n_draws), threads)
    skipped = tuple(i for i, stats in enumerate(results) if stats is None)
    return JitterEnsemble(
        realizations=tuple(stats for stats in results if stats is not None),
        seed=seed,
        batch_size=batch_size,
        n_draws=n_draws,
        skipped=skipped,
        population_size=X.shape[0],
    )


def _sigma2_variance(input_var: np.ndarray, phi4: np.ndarray, n: int) -> np.ndarray:
    return (phi4 - input_var**2 * (n - 3.0) / (n - 1.0)) / n


def noise_controlled(
    stats: BatchStats, actual_size: int, virtual_size: int, seed: int
) -> BatchStats:
    """Perturb batch statistics to mimic a smaller (virtual) batch size.

    Each ``mu`` gets additive Gaussian noise with variance
    ``<w^2, rho>(1/virtual - 1/actual)``; each ``sigma^2`` is multiplied by
    ``chi2(k) / k`` with ``k`` chosen so the added variance of ``sigma^2``
    matches the gap between the two predicted ``var(sigma^2)``.

    Raises:
        BatchSizeError: Unless ``2 <= virtual_size < actual_size``.
    """
    if virtual_size >= actual_size:
        raise BatchSizeError(
            f"virtual_size ({virtual_size}) must be smaller than actual_size "
            f"({actual_size}); there is no noise to add"
        )
    if virtual_size < 2:
        raise BatchSizeError(f"virtual_size must be >= 2, got {virtual_size}")

    rng = make_rng(seed, "noise", stats.batch_id if stats.batch_id is not None else 0)
    layers = {}
    for layer, layer_stats in stats.layers.items():
        gap_mu = layer_stats.input_var * (1.0 / virtual_size - 1.0 / actual_size)
        mu = layer_stats.mu + np.sqrt(np.maximum(gap_mu, 0.0)) * rng.standard_normal(
            layer_stats.mu.shape
        )
        mu = np.where(gap_mu > 0.0, mu, layer_stats.mu)

        sigma2 = layer_stats.sigma**2
        gap_s2 = _sigma2_variance(
            layer_stats.input_var, layer_stats.phi4, virtual_size
        ) - _sigma2_variance(layer_stats.input_var, layer_stats.phi4, actual_size)
        factor = np.ones_like(sigma2)
        noisy = gap_s2 > 0.0
        if np.any(noisy):
            dof = 2.0 * sigma2[noisy] ** 2 / gap_s2[noisy]
            factor[noisy] = sps.chi2.rvs(dof, random_state=rng) / dof
        layers[layer] = replace(layer_stats, mu=mu, sigma=np.sqrt(sigma2 * factor))
    return replace(stats, layers=layers)


def write_ensemble_csv(path: Path, realizations: Sequence[BatchStats]) -> Path:
    """Dump ``draw_id, layer, unit, mu, sigma`` rows (units are 1-based)."""
    rows = []
    for index, stats in enumerate(realizations):
        draw_id = stats.batch_id if stats.batch_id is not None else index
        for layer, layer_stats in stats.layers.items():
            for unit, (mu, sigma) in enumerate(
                zip(layer_stats.mu, layer_stats.sigma, strict=True), start=1
            ):
                rows.append((draw_id, layer, unit, mu, sigma))
    return write_csv(path, ("draw_id", "layer", "unit", "mu", "sigma"), rows)
