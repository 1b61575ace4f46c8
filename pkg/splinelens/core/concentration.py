"""Concentration of folded-hyperplane facets around input points.

A unit (j, k) counts for a point x when the in-region facet distance from x
is at most epsilon. Facets of neighbouring regions are not seen, so counts
are exact only for epsilon below the distance from x to its region boundary.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..utils.parallel import ordered_map
from ..utils.reports import write_csv
from .geometry import facet_local_distances
from .network import BNState, NetworkError, NetworkSpec
from .partition import as_box, grid_centers
from .training import initialize

logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = tuple(np.logspace(-3.0, 0.0, 13))
DEFAULT_RESOLUTION = 512
CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ConcentrationMap:
    """Ball counts at grid-cell centers.

    ``counts[row, col]`` has row 0 at the bottom of the box.
    """

    box: tuple[float, float, float, float]
    resolution: int
    epsilon: float
    layers: tuple[int, ...]
    counts: np.ndarray
    max_count: int

    @property
    def normalized(self) -> np.ndarray:
        """Counts divided by the maximum; all zeros when the maximum is 0."""
        if self.max_count == 0:
            return np.zeros(self.counts.shape)
        return self.counts / self.max_count

    @property
    def normalization_skipped(self) -> bool:
        return self.max_count == 0


def _layer_list(net: NetworkSpec, layers: int | Iterable[int] | None) -> list[int]:
    if layers is None:
        return list(range(1, net.depth + 1))
    if isinstance(layers, int | np.integer):
        layers = [int(layers)]
    layers = sorted(set(layers))
    for layer in layers:
        net._check_layer(layer)
    return layers


def ball_counts(
    net: NetworkSpec,
    bn: BNState | None,
    X: np.ndarray,
    epsilon: float,
    layers: int | Iterable[int] | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Vectorized :func:`ball_count` for the rows of ``X``."""
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    layer_list = _layer_list(net, layers)
    starts = range(0, X.shape[0], CHUNK)

    def count(start: int) -> np.ndarray:
        distances = facet_local_distances(net, bn, X[start : start + CHUNK], layer_list)
        degenerate = np.isnan(distances)
        if np.any(degenerate):
            logger.debug(
                "%d degenerate facet normal(s) not counted", int(degenerate.sum())
            )
        with np.errstate(invalid="ignore"):
            return np.sum(distances <= epsilon, axis=1)

    return np.concatenate(ordered_map(count, starts, threads)).astype(np.int64)


def ball_count(
    net: NetworkSpec,
    bn: BNState | None,
    x: np.ndarray,
    epsilon: float,
    layers: int | Iterable[int] | None = None,
) -> int:
    """Number of units (j, k), j in ``layers``, with facet distance <= epsilon.

    ``epsilon = math.inf`` counts every unit with a nondegenerate normal.
    """
    return int(ball_counts(net, bn, np.atleast_2d(x), epsilon, layers)[0])


def concentration_map(
    net: NetworkSpec,
    bn: BNState | None,
    box: Sequence[float],
    resolution: int,
    epsilon: float,
    layers: int | Iterable[int] | None = None,
    threads: int = 1,
) -> ConcentrationMap:
    """Ball counts over a ``resolution`` x ``resolution`` grid of the box."""
    if net.input_dim != 2:
        raise NetworkError("Concentration maps need 2-D inputs")
    box = as_box(box)
    _, _, points = grid_centers(box, resolution)
    counts = ball_counts(net, bn, points, epsilon, layers, threads).reshape(
        resolution, resolution
    )
    max_count = int(counts.max())
    if max_count == 0:
        logger.warning("Concentration map is all zero; normalization skipped")
    return ConcentrationMap(
        box=box,
        resolution=resolution,
        epsilon=float(epsilon),
        layers=tuple(_layer_list(net, layers)),
        counts=counts,
        max_count=max_count,
    )


def concentration_curve(
    net: NetworkSpec,
    bn: BNState | None,
    points: np.ndarray,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    layers: int | Iterable[int] | None = None,
) -> list[tuple[float, float]]:
    """Mean ball count over ``points`` for each epsilon (ascending)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0 or points.size == 0:
        raise ValueError("concentration_curve needs at least one point")
    epsilons = [float(eps) for eps in epsilons]
    if any(b < a for a, b in zip(epsilons, epsilons[1:], strict=False)):
        raise ValueError("epsilons must be sorted ascending")
    distances = facet_local_distances(net, bn, points, _layer_list(net, layers))
    with np.errstate(invalid="ignore"):
        return [
            (eps, float(np.mean(np.sum(distances <= eps, axis=1)))) for eps in epsilons
        ]


def normalized_at(
    cmap: ConcentrationMap,
    net: NetworkSpec,
    bn: BNState | None,
    points: np.ndarray,
) -> np.ndarray:
    """Ball counts at arbitrary points divided by the map maximum."""
    counts = ball_counts(net, bn, points, cmap.epsilon, cmap.layers)
    if cmap.max_count == 0:
        return np.zeros(counts.shape)
    return counts / cmap.max_count


def write_map_csv(path: Path, cmap: ConcentrationMap) -> Path:
    """``row, col, x, y, count, normalized`` per cell."""
    xs, ys, _ = grid_centers(cmap.box, cmap.resolution)
    normalized = cmap.normalized
    rows = (
        (row, col, xs[col], ys[row], cmap.counts[row, col], normalized[row, col])
        for row in range(cmap.resolution)
        for col in range(cmap.resolution)
    )
    return write_csv(Path(path), ("row", "col", "x", "y", "count", "normalized"), rows)


def write_curve_csv(path: Path, curve: Sequence[tuple[float, float]]) -> Path:
    return write_csv(Path(path), ("epsilon", "mean_count"), curve)


def epsilon_sweep(
    low: float = 1e-3, high: float = 1.0, count: int = 13
) -> tuple[float, ...]:
    """Log-spaced epsilons between ``low`` and ``high``."""
    if not 0.0 < low <= high or count < 1:
        raise ValueError("Need 0 < low <= high and count >= 1")
    sweep = np.logspace(math.log10(low), math.log10(high), count)
    return tuple(float(v) for v in sweep)


@dataclass(frozen=True)
class InitConcentration:
    mode: str
    seed: int
    mean_normalized: float
    max_count: int


def compare_initializations(
    template: NetworkSpec,
    points: np.ndarray,
    seeds: Sequence[int],
    box: Sequence[float],
    resolution: int,
    epsilon: float,
    layers: int | Iterable[int] | None = None,
    modes: Sequence[str] = ("bn_warmup", "random_bias", "zero_bias"),
    threads: int = 1,
) -> list[InitConcentration]:
    """Mean normalized concentration at ``points`` per initialization and seed.

    BN warm-up statistics are computed from ``points``.
    """
    rows = []
    for mode in modes:
        for seed in seeds:
            net, bn = initialize(template, mode, points, seed)
            cmap = concentration_map(net, bn, box, resolution, epsilon, layers, threads)
            value = float(np.mean(normalized_at(cmap, net, bn, points)))
            logger.info(
                "%s seed %d: mean normalized concentration %.4f", mode, seed, value
            )
            rows.append(InitConcentration(str(mode), seed, value, cmap.max_count))
    return rows
