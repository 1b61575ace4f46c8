"""Mini-batch jitter of BN statistics and of the decision boundary.

Each draw recomputes the BN statistics on a fresh mini-batch, which moves
every folded hyperplane, including the decision boundary. Variability of the
boundary is summarized by the Hausdorff distance between realizations, and
variability of the statistics is compared with the analytic predictions.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from ..utils.parallel import ordered_map
from ..utils.reports import write_csv
from .batchnorm import (
    BatchStats,
    JitterEnsemble,
    StatsSource,
    VariancePrediction,
    apply_stats,
    compute_stats,
    layer_variance_prediction,
    noise_controlled,
    sample_realizations,
)
from .network import BNState, NetworkSpec
from .partition import (
    DEFAULT_BOX,
    DEFAULT_REGION_BUDGET,
    PartitionError,
    decision_boundary,
    sample_segments,
    trace,
)

logger = logging.getLogger(__name__)

__all__ = [
    "JitterEnsemble",
    "EnsembleSizeError",
    "UnitDistribution",
    "analytic_predictions",
    "boundary_ensemble",
    "distribution_report",
    "hausdorff",
    "mean_pairwise_hausdorff",
    "noise_controlled_ensemble",
    "write_report_csv",
]

HAUSDORFF_SAMPLES = 1000


class EnsembleSizeError(ValueError):
    """Raised when an ensemble has too few realizations for a statistic."""

    pass


def _inputs(dataset) -> np.ndarray:
    return np.asarray(getattr(dataset, "inputs", dataset), dtype=np.float64)


def boundary_ensemble(
    net: NetworkSpec,
    dataset,
    batch_size: int,
    n_draws: int,
    box: Sequence[float] = DEFAULT_BOX,
    seed: int = 0,
    bn: BNState | None = None,
    eps_bn: float = 0.0,
    threads: int = 1,
    region_budget: int = DEFAULT_REGION_BUDGET,
) -> JitterEnsemble:
    """Decision boundaries under the statistics of ``n_draws`` mini-batches.

    Draws with degenerate statistics are skipped and logged. ``bn`` only
    supplies gamma/beta.

    Raises:
        PartitionError: For non-2-D inputs or a non-scalar head.
    """
    if net.input_dim != 2:
        raise PartitionError("Boundary ensembles need 2-D inputs")
    if net.widths[-1] != 1:
        raise PartitionError("Boundary ensembles need a scalar (binary) head")
    ensemble = sample_realizations(
        net,
        _inputs(dataset),
        batch_size,
        n_draws,
        seed,
        bn=bn,
        eps_bn=eps_bn,
        threads=threads,
        skip_degenerate=True,
    )
    if ensemble.skipped:
        logger.warning("Skipped %d of %d draws", len(ensemble.skipped), n_draws)

    def boundary(stats: BatchStats) -> np.ndarray:
        draw_bn = apply_stats(net, stats, base=bn)
        partition = trace(net, draw_bn, net.depth, box, region_budget)
        return decision_boundary(partition)

    boundaries = ordered_map(boundary, ensemble.realizations, threads)
    return replace(ensemble, boundaries=tuple(boundaries))


def hausdorff(a: np.ndarray, b: np.ndarray, samples: int = HAUSDORFF_SAMPLES) -> float:
    """Hausdorff distance between two segment sets sampled by arc length.

    Two empty sets are at distance 0; an empty and a nonempty set at infinity.
    """
    pa, pb = sample_segments(a, samples), sample_segments(b, samples)
    if len(pa) == 0 and len(pb) == 0:
        return 0.0
    if len(pa) == 0 or len(pb) == 0:
        return float("inf")
    return float(max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0]))


def mean_pairwise_hausdorff(
    boundaries: Sequence[np.ndarray], samples: int = HAUSDORFF_SAMPLES
) -> float:
    """Mean Hausdorff distance over all pairs (0 for fewer than two)."""
    pairs = list(combinations(range(len(boundaries)), 2))
    if not pairs:
        return 0.0
    return float(
        np.mean([hausdorff(boundaries[i], boundaries[j], samples) for i, j in pairs])
    )


@dataclass(frozen=True)
class UnitDistribution:
    """Empirical vs. analytic spread of one unit's statistics."""

    layer: int
    unit: int
    mean_mu: float
    var_mu: float
    mean_sigma: float
    var_sigma: float
    var_sigma2: float
    analytic_var_mu: float
    analytic_var_mu_fpc: float
    analytic_var_sigma2: float
    rel_gap_mu: float
    rel_gap_sigma2: float


def _relative_gap(empirical: np.ndarray, analytic: np.ndarray) -> np.ndarray:
    gap = np.full(np.shape(empirical), np.nan)
    np.divide(empirical - analytic, analytic, out=gap, where=analytic > 0.0)
    return gap


def analytic_predictions(
    net: NetworkSpec,
    population,
    batch_size: int,
    bn: BNState | None = None,
    eps_bn: float = 0.0,
) -> dict[int, VariancePrediction]:
    """Per BN layer predictions with moments taken over the whole population.

    Deeper layers see the population propagated with full-population
    statistics.
    """
    X = _inputs(population)
    stats = compute_stats(
        net, X, bn=bn, eps_bn=eps_bn, source=StatsSource.FULL_TRAINING_SET
    )
    full_bn = apply_stats(net, stats, base=bn)
    return {
        layer: layer_variance_prediction(net, full_bn, layer, X, batch_size)
        for layer in sorted(net.bn_layers)
    }


def distribution_report(
    ensemble: JitterEnsemble,
    analytic: Mapping[int, VariancePrediction],
) -> list[UnitDistribution]:
    """Compare the spread of mu and sigma across draws with predictions.

    Empirical variances use the unbiased (ddof=1) estimator over draws. When
    the draws come from a finite population of size N, the extra column
    scales the analytic var(mu) by ``(N - |B|) / (N - 1)``.

    Raises:
        EnsembleSizeError: With fewer than two realizations.
    """
    if len(ensemble) < 2:
        raise EnsembleSizeError(
            f"Need at least 2 realizations for a variance, got {len(ensemble)}"
        )
    fpc = 1.0
    if ensemble.population_size and ensemble.population_size > 1:
        n, b = ensemble.population_size, ensemble.batch_size
        fpc = (n - b) / (n - 1)

    rows = []
    for layer, prediction in sorted(analytic.items()):
        mu = np.array([stats.mu(layer) for stats in ensemble.realizations])
        sigma = np.array([stats.sigma(layer) for stats in ensemble.realizations])
        var_mu = mu.var(axis=0, ddof=1)
        var_sigma2 = (sigma**2).var(axis=0, ddof=1)
        analytic_mu = np.broadcast_to(prediction.var_mu, var_mu.shape)
        analytic_s2 = np.broadcast_to(prediction.var_sigma2, var_mu.shape)
        gap_mu = _relative_gap(var_mu, analytic_mu)
        gap_s2 = _relative_gap(var_sigma2, analytic_s2)
        for k in range(mu.shape[1]):
            rows.append(
                UnitDistribution(
                    layer=layer,
                    unit=k + 1,
                    mean_mu=float(mu[:, k].mean()),
                    var_mu=float(var_mu[k]),
                    mean_sigma=float(sigma[:, k].mean()),
                    var_sigma=float(sigma[:, k].var(ddof=1)),
                    var_sigma2=float(var_sigma2[k]),
                    analytic_var_mu=float(analytic_mu[k]),
                    analytic_var_mu_fpc=float(analytic_mu[k] * fpc),
                    analytic_var_sigma2=float(analytic_s2[k]),
                    rel_gap_mu=float(gap_mu[k]),
                    rel_gap_sigma2=float(gap_s2[k]),
                )
            )
    return rows


def noise_controlled_ensemble(
    net: NetworkSpec,
    dataset,
    actual_size: int,
    virtual_size: int,
    n_draws: int,
    seed: int = 0,
    bn: BNState | None = None,
    eps_bn: float = 0.0,
    threads: int = 1,
) -> JitterEnsemble:
    """Actual-size mini-batch statistics perturbed toward ``virtual_size``."""
    ensemble = sample_realizations(
        net,
        _inputs(dataset),
        actual_size,
        n_draws,
        seed,
        bn=bn,
        eps_bn=eps_bn,
        threads=threads,
    )
    noisy = ordered_map(
        lambda stats: noise_controlled(stats, actual_size, virtual_size, seed),
        ensemble.realizations,
        threads,
    )
    return replace(ensemble, realizations=tuple(noisy))


REPORT_COLUMNS = (
    "layer",
    "unit",
    "mean_mu",
    "var_mu",
    "mean_sigma",
    "var_sigma",
    "var_sigma2",
    "analytic_var_mu",
    "analytic_var_mu_fpc",
    "analytic_var_sigma2",
    "rel_gap_mu",
    "rel_gap_sigma2",
)


def write_report_csv(path: Path, rows: Sequence[UnitDistribution]) -> Path:
    return write_csv(
        Path(path),
        REPORT_COLUMNS,
        ([getattr(row, column) for column in REPORT_COLUMNS] for row in rows),
    )
