"""The verification battery behind ``splinelens verify``.

Every check draws its instances from ``make_rng(seed, "verify", <check>, i)``
and returns one row per instance. Instances are evaluated in index order, so
the rows do not depend on the thread count.
"""

import logging
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from ..utils.parallel import ordered_map
from ..utils.random import make_rng
from ..utils.reports import write_csv
from .batchnorm import (
    DegenerateStatisticError,
    apply_stats,
    compute_stats,
    layer_variance_prediction,
    sample_realizations,
    variance_prediction,
)
from .datasets import gaussian_inputs
from .geometry import (
    DegenerateHyperplaneError,
    UnreachableFacetError,
    centroid_incidence,
    check_folded_translation,
    check_tls_minimizer,
    dihedral_angles,
    facet_local_distance,
    folded_distance,
    line_angle,
    region_code_values,
    with_threshold,
)
from .jitter import distribution_report
from .network import (
    Activation,
    BNLayer,
    BNState,
    GammaAbsorptionError,
    NetworkSpec,
    absorb_gamma,
    activation_code,
    features_before,
    forward,
    glorot_network,
    layer_threshold,
    preactivation_normal,
)
from .partition import DEFAULT_BOX, compare_with_grid, grid_folded_distance, trace
from .training import (
    KinkProximityError,
    Loss,
    active_unit_check,
    each_side_check,
    grad_check,
)

logger = logging.getLogger(__name__)

Row = dict[str, Any]


class CheckSelectionError(ValueError):
    """Raised for unknown check names or settings."""

    pass


@dataclass(frozen=True)
class VerifySettings:
    """Instance counts and tolerances of the battery."""

    seed: int = 0
    threads: int = 1
    inject_mu_offset: float = 0.0
    tls_instances: int = 100
    tls_tol: float = 1e-9
    tls_identity_tol: float = 1e-10
    central_nets: int = 20
    central_tol: float = 1e-10
    gamma_nets: int = 20
    gamma_inputs: int = 100
    gamma_tol: float = 1e-12
    partition_nets: int = 30
    partition_resolution: int = 1500
    area_rtol: float = 1e-7
    dihedral_instances: int = 50
    dihedral_tol: float = 1e-6
    translation_instances: int = 200
    translation_tol: float = 1e-8
    translation_grid: int = 1500
    facet_pairs: int = 500
    facet_tol: float = 1e-6
    facet_min_fraction: float = 0.95
    facet_max_distance: float = 0.5
    variance_batches: int = 1_000_000
    variance_batch_sizes: tuple[int, ...] = (16, 64, 256)
    variance_mu_rtol: float = 0.02
    variance_sigma2_rtol: float = 0.05
    population_draws: int = 10_000
    each_side_trials: int = 500
    gradient_points: int = 50
    gradient_tol: float = 1e-5

    @classmethod
    def from_mapping(
        cls, values: Mapping[str, Any], **overrides: Any
    ) -> "VerifySettings":
        """Build settings from a config section; unknown keys are rejected."""
        known = {f.name: f for f in fields(cls)}
        merged = {**values, **overrides}
        unknown = sorted(set(merged) - set(known))
        if unknown:
            raise CheckSelectionError(f"Unknown verify settings: {', '.join(unknown)}")
        if "variance_batch_sizes" in merged:
            merged["variance_batch_sizes"] = tuple(
                int(size) for size in merged["variance_batch_sizes"]
            )
        return cls(**merged)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    rows: list[Row] = field(default_factory=list)
    summary: str = ""


def _rng(settings: VerifySettings, check: str, index: int) -> np.random.Generator:
    return make_rng(settings.seed, "verify", check, index)


def _collect(
    fn: Callable[[int], list[Row]], wanted: int, threads: int, max_index: int
) -> list[Row]:
    """Rows from instances 0, 1, ... until ``wanted`` rows are gathered."""
    rows: list[Row] = []
    start = 0
    while len(rows) < wanted and start < max_index:
        stop = min(start + max(wanted - len(rows), threads), max_index)
        for result in ordered_map(fn, range(start, stop), threads):
            rows.extend(result)
        start = stop
    return rows[:wanted]


def _leaky_net(
    rng: np.random.Generator,
    widths: Sequence[int],
    bn_layers: Iterable[int] = (),
    random_bias: bool = False,
) -> NetworkSpec:
    alpha = float(rng.uniform(0.05, 0.5))
    return glorot_network(
        widths,
        Activation.LEAKY,
        rng,
        alpha=alpha,
        random_bias=random_bias,
        bn_layers=bn_layers,
    )


def _batch(rng: np.random.Generator, size: int, dim: int) -> np.ndarray:
    offset = rng.uniform(-1.0, 1.0, size=dim)
    scale = rng.uniform(0.5, 2.0, size=dim)
    return offset + scale * rng.standard_normal((size, dim))


def _batch_bn(
    rng: np.random.Generator,
    net: NetworkSpec,
    batch: np.ndarray,
    affine: bool = False,
) -> BNState:
    """Batch-mode BN state, optionally with random gamma in (0.5, 2) and beta."""
    base = None
    if affine:
        base = BNState(
            layers={
                layer: BNLayer.from_stats(
                    np.zeros(net.widths[layer]),
                    np.ones(net.widths[layer]),
                    gamma=rng.uniform(0.5, 2.0, size=net.widths[layer]),
                    beta=rng.normal(0.0, 0.5, size=net.widths[layer]),
                )
                for layer in net.bn_layers
            }
        )
    return apply_stats(net, compute_stats(net, batch, bn=base), base=base)


# TLS minimizer


def check_tls(settings: VerifySettings) -> CheckResult:
    def instance(index: int) -> list[Row]:
        rng = _rng(settings, "tls-minimizer", index)
        width = int(rng.integers(1, 17))
        dim = int(rng.integers(1, 9))
        size = int(rng.integers(2, 257))
        W = rng.standard_normal((width, dim))
        batch = _batch(rng, size, dim)
        mu = (batch @ W.T).mean(axis=0) + settings.inject_mu_offset
        report = check_tls_minimizer(W, batch, mu=mu)
        passed = (
            report.gap <= settings.tls_tol
            and report.identity_residual <= settings.tls_identity_tol
        )
        return [
            {
                "instance": index,
                "width": width,
                "input_dim": dim,
                "batch_size": size,
                "gap": report.gap,
                "identity_residual": report.identity_residual,
                "passed": passed,
            }
        ]

    rows = _collect(
        instance, settings.tls_instances, settings.threads, settings.tls_instances
    )
    worst = max((row["gap"] for row in rows), default=0.0)
    return CheckResult(
        "tls-minimizer",
        all(row["passed"] for row in rows),
        rows,
        f"{len(rows)} instances, worst gap {worst:.3g}",
    )


# Central arrangement


def check_central(settings: VerifySettings) -> CheckResult:
    def instance(index: int) -> list[Row]:
        rng = _rng(settings, "central-arrangement", index)
        depth = int(rng.integers(2, 5))
        widths = [int(rng.integers(2, 5))] + [
            int(rng.integers(1, 9)) for _ in range(depth)
        ]
        net = _leaky_net(rng, widths, bn_layers=range(1, depth))
        batch = _batch(rng, int(rng.integers(8, 257)), widths[0])
        bn = _batch_bn(rng, net, batch)
        rows = []
        for layer in sorted(net.bn_layers):
            residual = centroid_incidence(net, bn, layer, batch)
            rows.append(
                {
                    "net": index,
                    "layer": layer,
                    "residual": residual,
                    "passed": residual <= settings.central_tol,
                }
            )
        return rows

    rows: list[Row] = []
    for result in ordered_map(instance, range(settings.central_nets), settings.threads):
        rows.extend(result)
    worst = max((row["residual"] for row in rows), default=0.0)
    return CheckResult(
        "central-arrangement",
        all(row["passed"] for row in rows),
        rows,
        f"{settings.central_nets} nets, worst residual {worst:.3g}",
    )


# Gamma absorption


def check_gamma(settings: VerifySettings) -> CheckResult:
    def instance(index: int) -> list[Row]:
        rng = _rng(settings, "gamma-absorption", index)
        widths = [int(rng.integers(2, 5)), int(rng.integers(1, 9))]
        widths += [int(rng.integers(1, 9)), int(rng.integers(1, 4))]
        net = _leaky_net(rng, widths, bn_layers=(1, 2), random_bias=True)
        bn = _batch_bn(rng, net, _batch(rng, 64, widths[0]), affine=True)
        X = _batch(rng, settings.gamma_inputs, widths[0])
        absorbed_net, absorbed_bn = absorb_gamma(net, bn)
        original = forward(net, bn, X).output
        absorbed = forward(absorbed_net, absorbed_bn, X).output
        scale = np.maximum(1.0, np.abs(original))
        error = float(np.max(np.abs(original - absorbed) / scale))
        negated = np.array(bn[1].gamma)
        negated[0] = -negated[0]
        bad = bn.with_layer(1, BNLayer(bn[1].mu, bn[1].sigma, negated, bn[1].beta))
        try:
            absorb_gamma(net, bad)
            rejects = False
        except GammaAbsorptionError:
            rejects = True
        return [
            {
                "net": index,
                "max_rel_diff": error,
                "rejects_nonpositive": rejects,
                "passed": error <= settings.gamma_tol and rejects,
            }
        ]

    rows: list[Row] = []
    for result in ordered_map(instance, range(settings.gamma_nets), settings.threads):
        rows.extend(result)
    worst = max((row["max_rel_diff"] for row in rows), default=0.0)
    return CheckResult(
        "gamma-absorption",
        all(row["passed"] for row in rows),
        rows,
        f"{settings.gamma_nets} nets, worst difference {worst:.3g}",
    )


# Partition exactness


def check_partition(settings: VerifySettings) -> CheckResult:
    def instance(index: int) -> list[Row]:
        rng = _rng(settings, "partition-exactness", index)
        widths = [2, int(rng.integers(1, 6)), int(rng.integers(1, 6))]
        with_bn = index % 2 == 0
        net = _leaky_net(
            rng, widths, bn_layers=(1,) if with_bn else (), random_bias=not with_bn
        )
        bn = _batch_bn(rng, net, _batch(rng, 64, 2)) if with_bn else None
        partition = trace(net, bn, 2, DEFAULT_BOX)
        comparison = compare_with_grid(
            partition, net, bn, settings.partition_resolution
        )
        area_error = abs(partition.total_area - partition.box_area) / partition.box_area
        return [
            {
                "net": index,
                "bn": with_bn,
                "widths": "-".join(str(w) for w in widths),
                "regions": len(partition.regions),
                "segments": partition.segments.shape[0],
                "traced_codes": comparison.traced_codes,
                "grid_codes": comparison.grid_codes,
                "missing_from_trace": comparison.missing_from_trace,
                "mismatched_cells": comparison.mismatched_cells,
                "checked_cells": comparison.checked_cells,
                "area_rel_error": area_error,
                "passed": comparison.exact and area_error <= settings.area_rtol,
            }
        ]

    rows: list[Row] = []
    nets = range(settings.partition_nets)
    for result in ordered_map(instance, nets, settings.threads):
        rows.extend(result)
    failed = sum(not row["passed"] for row in rows)
    return CheckResult(
        "partition-exactness",
        failed == 0,
        rows,
        f"{len(rows)} nets at {settings.partition_resolution}^2, {failed} inexact",
    )


# Dihedral angles


MIN_MEASURED_LENGTH = 1e-3


def _segment_normal(segment: np.ndarray) -> np.ndarray:
    return np.array([segment[1] - segment[3], segment[2] - segment[0]])


def _longest(segments: np.ndarray) -> np.ndarray | None:
    if segments.shape[0] == 0:
        return None
    lengths = np.hypot(segments[:, 2] - segments[:, 0], segments[:, 3] - segments[:, 1])
    best = int(np.argmax(lengths))
    return segments[best] if lengths[best] >= MIN_MEASURED_LENGTH else None


def identity_dihedral_case() -> tuple[float, float, float]:
    """Angles for W1 = I, w2 = (1, 1) and codes (1, 1) vs (-1, 1).

    The exact answer is (pi/4, pi/4, pi/2).
    """
    report = dihedral_angles(np.eye(2), None, np.ones(2), 1, (1.0, 1.0), (-1.0, 1.0))
    return report.theta_F_H, report.theta_Fp_H, report.theta_F_Fp


def check_dihedral(settings: VerifySettings) -> CheckResult:
    def instance(index: int) -> list[Row]:
        rng = _rng(settings, "dihedral-angles", index)
        widths = [2, int(rng.integers(2, 6)), int(rng.integers(1, 4))]
        net = _leaky_net(rng, widths, bn_layers=(1,))
        bn = _batch_bn(rng, net, _batch(rng, 64, 2), affine=True)
        partition = trace(net, bn, 2, DEFAULT_BOX)
        rows = []
        for k in range(1, widths[2] + 1):
            groups: dict[tuple[float, ...], list[np.ndarray]] = {}
            for segment in partition.folded_hyperplane(2, k):
                midpoint = 0.5 * (segment[:2] + segment[2:])
                code = tuple(region_code_values(net, bn, midpoint, 1).tolist())
                groups.setdefault(code, []).append(segment)
            codes = sorted(groups)
            for a, code in enumerate(codes):
                for code_alt in codes[a + 1 :]:
                    differs = np.flatnonzero(np.array(code) != np.array(code_alt))
                    if differs.size != 1:
                        continue
                    i = int(differs[0]) + 1
                    facet = _longest(np.array(groups[code]))
                    facet_alt = _longest(np.array(groups[code_alt]))
                    plane = _longest(partition.folded_hyperplane(1, i))
                    if facet is None or facet_alt is None or plane is None:
                        continue
                    try:
                        report = dihedral_angles(
                            net.weight(1),
                            bn[1],
                            net.weight(2)[k - 1],
                            i,
                            code,
                            code_alt,
                        )
                    except DegenerateHyperplaneError:
                        continue
                    measured = (
                        line_angle(_segment_normal(facet), _segment_normal(plane)),
                        line_angle(_segment_normal(facet_alt), _segment_normal(plane)),
                        line_angle(_segment_normal(facet), _segment_normal(facet_alt)),
                    )
                    analytic = (report.theta_F_H, report.theta_Fp_H, report.theta_F_Fp)
                    error = max(
                        abs(m - e) for m, e in zip(measured, analytic, strict=True)
                    )
                    rows.append(
                        {
                            "net": index,
                            "layer1_unit": i,
                            "layer2_unit": k,
                            "theta_F_H": analytic[0],
                            "theta_Fp_H": analytic[1],
                            "theta_F_Fp": analytic[2],
                            "max_abs_error": error,
                            "passed": error <= settings.dihedral_tol,
                        }
                    )
        return rows

    rows = _collect(
        instance,
        settings.dihedral_instances,
        settings.threads,
        max_index=max(20 * settings.dihedral_instances, 1),
    )
    identity = identity_dihedral_case()
    expected = (math.pi / 4.0, math.pi / 4.0, math.pi / 2.0)
    identity_error = max(abs(a - b) for a, b in zip(identity, expected, strict=True))
    rows.append(
        {
            "net": "identity",
            "layer1_unit": 1,
            "layer2_unit": 1,
            "theta_F_H": identity[0],
            "theta_Fp_H": identity[1],
            "theta_F_Fp": identity[2],
            "max_abs_error": identity_error,
            "passed": identity_error <= 1e-12,
        }
    )
    enough = len(rows) - 1 >= settings.dihedral_instances
    if not enough:
        logger.warning(
            "Only %d dihedral instances found, wanted %d",
            len(rows) - 1,
            settings.dihedral_instances,
        )
    return CheckResult(
        "dihedral-angles",
        enough and all(row["passed"] for row in rows),
        rows,
        f"{len(rows) - 1} adjacent-region instances plus the identity case",
    )


# Folded translation


def _translation_case(settings: VerifySettings, index: int):
    """Network, input, unit and the two alternative thresholds of one instance."""
    rng = _rng(settings, "folded-translation", index)
    widths = [2, int(rng.integers(1, 6)), int(rng.integers(1, 4))]
    net = _leaky_net(rng, widths, bn_layers=(1,))
    bn = _batch_bn(rng, net, _batch(rng, 64, 2))
    j = int(rng.integers(1, 3))
    k = int(rng.integers(1, widths[j] + 1))
    x = rng.uniform(-2.0, 2.0, size=2)
    value = float(net.weight(j)[k - 1] @ features_before(net, bn, x, j))
    mu = float(layer_threshold(net, bn, j)[k - 1])
    on_plane = index % 4 == 0
    # Same-side moves: mu_alt lies on the ray from <w, z(x)> through mu.
    if on_plane:
        t = 0.0
    elif rng.random() < 0.5:
        t = float(rng.uniform(0.1, 0.9))
    else:
        t = float(rng.uniform(1.1, 2.0))
    ray = value + t * (mu - value)
    independent = float(rng.normal(mu, 1.0 + abs(value - mu)))
    return net, bn, x, j, k, value, mu, ray, independent


def check_translation(settings: VerifySettings) -> CheckResult:
    """Same-side (ray) moves gate the check.

    Each instance also gets an independently drawn threshold. Those rows are
    reported; when the move crosses ``<w, z(x)>`` the implication is outside
    what the ray construction guarantees and failures are only logged.
    """
    box = DEFAULT_BOX

    def compare(index: int, draw: str) -> list[Row]:
        net, bn, x, j, k, value, mu, ray, independent = _translation_case(
            settings, index
        )
        mu_alt = ray if draw == "ray" else independent
        same_side = draw == "ray" or (value - mu_alt) * (value - mu) > 0.0
        try:
            report = check_folded_translation(
                net, bn, x, j, k, mu_alt, box=box, tol=settings.translation_tol
            )
        except UnreachableFacetError:
            return []
        confirmed = None
        if not report.ok:
            logger.warning(
                "Folded-translation candidate violation: instance %d unit (%d, %d), "
                "%s threshold",
                index,
                j,
                k,
                draw,
            )
            net_alt, bn_alt = with_threshold(net, bn, j, k, mu_alt)
            resolution = settings.translation_grid
            grid = grid_folded_distance(net, bn, x, j, k, box, resolution)
            grid_alt = grid_folded_distance(
                net_alt, bn_alt, x, j, k, box, resolution
            )
            closer_alt = report.feature_distance_alt < report.feature_distance
            confirmed = bool(grid_alt >= grid if closer_alt else grid >= grid_alt)
            if confirmed:
                logger.warning("Violation at instance %d confirmed on the grid", index)
        return [
            {
                "instance": index,
                "draw": draw,
                "layer": j,
                "unit": k,
                "on_hyperplane": draw == "ray" and index % 4 == 0,
                "same_side": same_side,
                "feature_distance": report.feature_distance,
                "feature_distance_alt": report.feature_distance_alt,
                "folded_distance": report.folded_distance,
                "folded_distance_alt": report.folded_distance_alt,
                "implication_holds": report.implication_holds,
                "zero_iff_zero": report.zero_iff_zero,
                "grid_confirmed": confirmed,
                "passed": report.ok or draw != "ray",
            }
        ]

    def ray_instance(index: int) -> list[Row]:
        return compare(index, "ray")

    def independent_instance(index: int) -> list[Row]:
        return compare(index, "independent")

    rows = _collect(
        ray_instance,
        settings.translation_instances,
        settings.threads,
        max_index=max(5 * settings.translation_instances, 1),
    )
    gated = len(rows)
    failed = sum(not row["passed"] for row in rows)
    for result in ordered_map(
        independent_instance, [row["instance"] for row in rows], settings.threads
    ):
        rows.extend(result)
    independent = rows[gated:]
    crossing = sum(not row["same_side"] for row in independent)
    broken = sum(
        not (row["implication_holds"] and row["zero_iff_zero"]) for row in independent
    )
    if broken:
        logger.info(
            "Folded-translation finding: %d/%d independent thresholds break the "
            "implication (%d cross the input)",
            broken,
            len(independent),
            crossing,
        )
    return CheckResult(
        "folded-translation",
        failed == 0 and gated == settings.translation_instances,
        rows,
        f"{gated} ray instances, {failed} violations; {len(independent)} "
        f"independent thresholds, {broken} break the implication",
    )


# Facet distance


def _projection_in_region(
    net: NetworkSpec, bn: BNState, x: np.ndarray, j: int, k: int
) -> bool:
    """Whether x's orthogonal projection onto facet (j, k) stays in x's region."""
    if j == 1:
        return True
    normal = preactivation_normal(net, bn, x, j, k).vector
    residual = float(
        net.weight(j)[k - 1] @ features_before(net, bn, x, j)
        - layer_threshold(net, bn, j)[k - 1]
    )
    p = x - residual * normal / float(normal @ normal)
    xmin, xmax, ymin, ymax = DEFAULT_BOX
    if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
        return False
    return activation_code(net, bn, p, depth=j - 1) == activation_code(
        net, bn, x, depth=j - 1
    )


PAIRS_PER_NET = 20


def check_facet(settings: VerifySettings) -> CheckResult:
    def instance(index: int) -> list[Row]:
        rng = _rng(settings, "facet-distance", index)
        widths = [2, int(rng.integers(2, 6)), int(rng.integers(2, 6)), 1]
        net = _leaky_net(rng, widths, bn_layers=(1, 2))
        bn = _batch_bn(rng, net, _batch(rng, 64, 2))
        partitions = {}
        rows = []
        for _ in range(5 * PAIRS_PER_NET):
            if len(rows) == PAIRS_PER_NET:
                break
            j = int(rng.integers(1, net.depth + 1))
            k = int(rng.integers(1, widths[j] + 1))
            x = rng.uniform(-2.5, 2.5, size=2)
            local = facet_local_distance(net, bn, x, j, k)
            if math.isnan(local) or local > settings.facet_max_distance:
                continue
            if not _projection_in_region(net, bn, x, j, k):
                continue
            if j not in partitions:
                partitions[j] = trace(net, bn, j, DEFAULT_BOX)
            brute = folded_distance(net, bn, x, j, k, partitions[j])
            match = abs(local - brute) <= settings.facet_tol
            # A strictly closer point of F lies outside x's region.
            cross_region = brute < local - settings.facet_tol
            rows.append(
                {
                    "net": index,
                    "layer": j,
                    "unit": k,
                    "x0": x[0],
                    "x1": x[1],
                    "local_distance": local,
                    "folded_distance": brute,
                    "match": match,
                    "cross_region": cross_region,
                }
            )
        return rows

    rows = _collect(
        instance,
        settings.facet_pairs,
        settings.threads,
        max_index=max(settings.facet_pairs, 1),
    )
    matched = sum(row["match"] for row in rows)
    unexplained = [row for row in rows if not row["match"] and not row["cross_region"]]
    fraction = matched / len(rows) if rows else 0.0
    for row in unexplained:
        logger.warning(
            "Facet distance mismatch without a closer facet: net %s unit (%d, %d)",
            row["net"],
            row["layer"],
            row["unit"],
        )
    return CheckResult(
        "facet-distance",
        bool(rows) and fraction >= settings.facet_min_fraction and not unexplained,
        rows,
        f"{matched}/{len(rows)} pairs match, {len(unexplained)} unexplained",
    )


# BN variance


VARIANCE_W = np.array([1.0, -2.0, 0.5])
VARIANCE_RHO = np.array([1.0, 3.0, 0.1])
VARIANCE_MEAN = np.array([1.0, 0.0, -1.0])
MONTE_CARLO_CHUNK = 10_000


def _monte_carlo(settings: VerifySettings, batch_size: int) -> Row:
    """Sampling variance of mu and sigma^2 over i.i.d. Gaussian batches.

    The projections ``<w, z>`` are drawn directly from their Gaussian law.
    """
    rng = _rng(settings, "bn-variance", batch_size)
    input_var = float(VARIANCE_W**2 @ VARIANCE_RHO)
    center = float(VARIANCE_W @ VARIANCE_MEAN)
    prediction = variance_prediction(
        VARIANCE_W, VARIANCE_RHO, 3.0 * input_var**2, batch_size
    )
    mus, unbiased, biased = [], [], []
    remaining = settings.variance_batches
    while remaining > 0:
        count = min(remaining, MONTE_CARLO_CHUNK)
        u = center + math.sqrt(input_var) * rng.standard_normal((count, batch_size))
        mus.append(u.mean(axis=1))
        unbiased.append(u.var(axis=1, ddof=1))
        biased.append(u.var(axis=1))
        remaining -= count
    var_mu = float(np.var(np.concatenate(mus), ddof=1))
    var_unbiased = float(np.var(np.concatenate(unbiased), ddof=1))
    var_biased = float(np.var(np.concatenate(biased), ddof=1))
    analytic_mu = float(prediction.var_mu)
    analytic_s2 = float(prediction.var_sigma2)
    gap_mu = abs(var_mu - analytic_mu) / analytic_mu
    gap_unbiased = abs(var_unbiased - analytic_s2) / analytic_s2
    gap_biased = abs(var_biased - analytic_s2) / analytic_s2
    passed = (
        gap_mu <= settings.variance_mu_rtol
        and gap_unbiased <= settings.variance_sigma2_rtol
        and (batch_size < 64 or gap_biased <= settings.variance_sigma2_rtol)
    )
    return {
        "setting": "gaussian",
        "batch_size": batch_size,
        "unit": 1,
        "var_mu": var_mu,
        "analytic_var_mu": analytic_mu,
        "rel_gap_mu": gap_mu,
        "var_sigma2_unbiased": var_unbiased,
        "var_sigma2_biased": var_biased,
        "analytic_var_sigma2": analytic_s2,
        "rel_gap_sigma2_unbiased": gap_unbiased,
        "rel_gap_sigma2_biased": gap_biased,
        "passed": passed,
    }


def finite_population_rows(
    seed: int,
    draws: int,
    population: int = 1000,
    batch_size: int = 64,
    threads: int = 1,
) -> list[Row]:
    """Per-unit var(mu) for batches drawn from a finite Gaussian sample.

    Inputs are N((1, 0, -1), diag(1, 3, 0.1)) and the BN layer has W = I.
    """
    dataset = gaussian_inputs(population, 3, VARIANCE_MEAN, VARIANCE_RHO, seed=seed)
    net = NetworkSpec.build(
        [np.eye(3), np.ones((1, 3))],
        activation=Activation.LEAKY,
        alpha=0.1,
        bn_layers=(1,),
    )
    full = apply_stats(net, compute_stats(net, dataset.inputs))
    prediction = layer_variance_prediction(net, full, 1, dataset.inputs, batch_size)
    ensemble = sample_realizations(
        net, dataset.inputs, batch_size, draws, seed, threads=threads
    )
    rows = []
    for unit in distribution_report(ensemble, {1: prediction}):
        literal = abs(unit.var_mu - unit.analytic_var_mu) / unit.analytic_var_mu
        fpc = unit.analytic_var_mu_fpc
        corrected = abs(unit.var_mu - fpc) / fpc
        rows.append(
            {
                "setting": "finite_population",
                "batch_size": batch_size,
                "unit": unit.unit,
                "var_mu": unit.var_mu,
                "analytic_var_mu": unit.analytic_var_mu,
                "analytic_var_mu_fpc": unit.analytic_var_mu_fpc,
                "rel_gap_mu": literal,
                "rel_gap_mu_fpc": corrected,
                "passed": literal <= 0.10 and corrected <= 0.05,
            }
        )
    return rows


def check_variance(settings: VerifySettings) -> CheckResult:
    rows = ordered_map(
        lambda size: _monte_carlo(settings, size),
        settings.variance_batch_sizes,
        settings.threads,
    )
    rows += finite_population_rows(
        settings.seed, settings.population_draws, threads=settings.threads
    )
    failed = sum(not row["passed"] for row in rows)
    return CheckResult(
        "bn-variance",
        failed == 0,
        rows,
        f"{settings.variance_batches} Monte Carlo batches per size, {failed} failures",
    )


# Each side


def check_each_side(settings: VerifySettings) -> CheckResult:
    """Guaranteed regime (penultimate width 1) must pass; wider is reported."""

    def instance(index: int) -> list[Row]:
        rng = _rng(settings, "each-side", index)
        guaranteed = index % 2 == 0
        depth = int(rng.integers(2, 5))
        widths = [int(rng.integers(2, 5))]
        widths += [int(rng.integers(1, 9)) for _ in range(depth - 2)]
        widths.append(1 if guaranteed else int(rng.integers(2, 9)))
        widths.append(int(rng.integers(1, 4)))
        net = _leaky_net(rng, widths, bn_layers=range(1, depth))
        batch = _batch(rng, int(rng.integers(2, 65)), widths[0])
        try:
            bn = apply_stats(net, compute_stats(net, batch))
        except DegenerateStatisticError as e:
            logger.debug("Each-side trial %d skipped: %s", index, e)
            return []
        straddles = bool(np.all(each_side_check(net, bn, batch)))
        units = active_unit_check(net, bn, batch).values()
        active = all(np.all(straddling) for straddling in units)
        return [
            {
                "trial": index,
                "regime": "guaranteed" if guaranteed else "general",
                "depth": depth,
                "penultimate_width": widths[-2],
                "batch_size": batch.shape[0],
                "each_side": straddles,
                "active_units": active,
                "passed": active and (straddles or not guaranteed),
            }
        ]

    rows = _collect(
        instance,
        2 * settings.each_side_trials,
        settings.threads,
        max_index=4 * max(settings.each_side_trials, 1),
    )
    guaranteed = [row for row in rows if row["regime"] == "guaranteed"]
    general = [row for row in rows if row["regime"] == "general"]
    general_failures = sum(not row["each_side"] for row in general)
    if general:
        logger.info(
            "Each-side finding: %d/%d wide-penultimate trials do not straddle",
            general_failures,
            len(general),
        )
    held = sum(row["each_side"] for row in guaranteed)
    return CheckResult(
        "each-side",
        all(row["passed"] for row in rows),
        rows,
        f"{held}/{len(guaranteed)} guaranteed trials straddle; "
        f"{general_failures}/{len(general)} wide-penultimate trials do not",
    )


# Gradients


@dataclass(frozen=True)
class _Architecture:
    name: str
    widths: tuple[int, ...]
    loss: Loss
    bn_layers: tuple[int, ...] = ()
    batch_stats: bool = False


GRADIENT_ARCHITECTURES = (
    _Architecture("linear-squared", (3, 2), Loss.SQUARED),
    _Architecture("leaky-cross-entropy", (2, 8, 8, 3), Loss.SOFTMAX_CROSS_ENTROPY),
    _Architecture(
        "bn-fixed-logistic", (2, 6, 6, 1), Loss.SOFTMAX_CROSS_ENTROPY, (1, 2)
    ),
    _Architecture("bn-batch-squared", (2, 5, 4, 2), Loss.SQUARED, (1, 2), True),
)
GRADIENT_BATCH = 8
KINK_RETRIES = 20


def check_gradients(settings: VerifySettings) -> CheckResult:
    def instance(index: int) -> list[Row]:
        arch = GRADIENT_ARCHITECTURES[index // settings.gradient_points]
        point = index % settings.gradient_points
        rng = _rng(settings, f"gradients-{arch.name}", point)
        net = _leaky_net(rng, arch.widths, arch.bn_layers, random_bias=True)
        bn = None
        if arch.bn_layers:
            bn = _batch_bn(rng, net, _batch(rng, 64, arch.widths[0]), affine=True)
        classes = max(arch.widths[-1], 2)
        for attempt in range(KINK_RETRIES):
            size = GRADIENT_BATCH if arch.batch_stats else 1
            x = _batch(rng, size, arch.widths[0])
            labels = rng.integers(0, classes, size=size)
            try:
                error = grad_check(
                    net, bn, arch.loss, x, labels, batch_stats=arch.batch_stats
                )
            except KinkProximityError:
                continue
            return [
                {
                    "architecture": arch.name,
                    "point": point,
                    "retries": attempt,
                    "max_rel_error": error,
                    "passed": error <= settings.gradient_tol,
                }
            ]
        return [
            {
                "architecture": arch.name,
                "point": point,
                "retries": KINK_RETRIES,
                "max_rel_error": math.nan,
                "passed": False,
            }
        ]

    total = settings.gradient_points * len(GRADIENT_ARCHITECTURES)
    rows: list[Row] = []
    for result in ordered_map(instance, range(total), settings.threads):
        rows.extend(result)
    worst = max(
        (row["max_rel_error"] for row in rows if not math.isnan(row["max_rel_error"])),
        default=0.0,
    )
    return CheckResult(
        "gradients",
        all(row["passed"] for row in rows),
        rows,
        f"{len(rows)} points over {len(GRADIENT_ARCHITECTURES)} architectures, "
        f"worst error {worst:.3g}",
    )


CHECKS: dict[str, Callable[[VerifySettings], CheckResult]] = {
    "tls-minimizer": check_tls,
    "central-arrangement": check_central,
    "gamma-absorption": check_gamma,
    "partition-exactness": check_partition,
    "dihedral-angles": check_dihedral,
    "folded-translation": check_translation,
    "facet-distance": check_facet,
    "bn-variance": check_variance,
    "each-side": check_each_side,
    "gradients": check_gradients,
}


def _columns(rows: Sequence[Row]) -> list[str]:
    columns: dict[str, None] = {}
    for row in rows:
        columns.update(dict.fromkeys(row))
    return list(columns) or ["passed"]


def write_results(directory: Path, results: Sequence[CheckResult]) -> Path:
    """One ``<name>.csv`` per check plus ``summary.csv``."""
    directory = Path(directory)
    for result in results:
        write_csv(directory / f"{result.name}.csv", _columns(result.rows), result.rows)
    return write_csv(
        directory / "summary.csv",
        ("check", "passed", "instances", "summary"),
        ((r.name, r.passed, len(r.rows), r.summary) for r in results),
    )


def run_checks(
    settings: VerifySettings,
    only: Sequence[str] | None = None,
    directory: Path | None = None,
) -> list[CheckResult]:
    """Run the selected checks in registry order.

    Raises:
        CheckSelectionError: For a name not in ``CHECKS``.
    """
    selected = list(CHECKS)
    if only:
        unknown = sorted(set(only) - set(CHECKS))
        if unknown:
            raise CheckSelectionError(
                f"Unknown check(s) {', '.join(unknown)}; "
                f"available: {', '.join(CHECKS)}"
            )
        selected = [name for name in CHECKS if name in set(only)]

    results = []
    for name in selected:
        logger.info("Running check %s", name)
        result = CHECKS[name](settings)
        log = logger.info if result.passed else logger.warning
        status = "passed" if result.passed else "FAILED"
        log("Check %s %s: %s", name, status, result.summary)
        results.append(result)
    if directory is not None:
        write_results(directory, results)
    return results
