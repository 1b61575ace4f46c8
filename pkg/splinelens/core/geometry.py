"""Hyperplanes, distances and the geometric properties BN statistics induce.

All distances returned here are unsquared Euclidean distances.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .network import (
    ActivationCode,
    BNLayer,
    BNMode,
    BNState,
    NetworkError,
    NetworkSpec,
    activation_code,
    check_compatible,
    features_before,
    layer_affine,
    layer_threshold,
    preactivation_normal,
)
from .partition import Partition2D, point_segment_distances, trace

logger = logging.getLogger(__name__)

ARCCOS_GUARD = 1e-12


class DegenerateHyperplaneError(ValueError):
    """Raised for a hyperplane (or TLS row) with a zero normal."""

    pass


class NonAdjacentCodesError(ValueError):
    """Raised when two codes do not differ in exactly the given entry."""

    pass


class SearchConvergenceError(ArithmeticError):
    """Raised when the 1-D TLS minimization fails to converge."""

    pass


class StatsProvenanceError(ValueError):
    """Raised when a check needs batch-derived statistics but got fixed ones."""

    pass


class UnreachableFacetError(LookupError):
    """Raised when a folded hyperplane has no segment inside the box."""

    pass


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """The set ``{z : <w, z> = mu}``."""

    w: np.ndarray
    mu: float

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or not np.linalg.norm(w) > 0.0:
            raise DegenerateHyperplaneError(
                "Hyperplane normal must be a nonzero vector"
            )
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "mu", float(self.mu))


def distance_to_hyperplane(v: np.ndarray, H: Hyperplane) -> float | np.ndarray:
    """``|<w, v> - mu| / ||w||`` for a point or a batch of rows."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != H.w.shape[0]:
        raise ValueError(
            f"Point dimension {v.shape[-1]} != normal dimension {H.w.shape[0]}"
        )
    distance = np.abs(v @ H.w - H.mu) / np.linalg.norm(H.w)
    return float(distance) if distance.ndim == 0 else distance


def layer_hyperplanes(
    net: NetworkSpec, bn: BNState | None, layer: int
) -> list[Hyperplane]:
    """Hyperplanes of ``layer`` in the space of its input ``z_{layer-1}``."""
    thresholds = layer_threshold(net, bn, layer)
    return [
        Hyperplane(w=w, mu=mu)
        for w, mu in zip(net.weight(layer), thresholds, strict=True)
    ]


def _row_norms(W: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0.0):
        rows = (np.flatnonzero(norms == 0.0) + 1).tolist()
        raise DegenerateHyperplaneError(f"Rows {rows} have zero norm")
    return norms


def tls_loss(mu_vec: np.ndarray, W: np.ndarray, batch: np.ndarray) -> float:
    """Sum over rows of the mean squared distance from the batch to each hyperplane."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("tls_loss needs a nonempty batch")
    norms = _row_norms(W)
    residual = batch @ W.T - np.asarray(mu_vec, dtype=np.float64)
    return float(np.sum(np.mean(residual**2, axis=0) / norms**2))


@dataclass(frozen=True, eq=False)
class TLSReport:
    """Outcome of the TLS minimizer check, per row and worst case."""

    argmin: np.ndarray
    batch_mean: np.ndarray
    expected: np.ndarray
    gap: float
    identity_residual: float


def check_tls_minimizer(
    W: np.ndarray, batch: np.ndarray, mu: np.ndarray | None = None
) -> TLSReport:
    """Numerically minimize each row's TLS loss over its offset.

    Golden-section search brackets the minimizer and a Newton polish on the
    analytic derivative refines it. The gap is measured against ``mu`` (for
    instance stored BN statistics) or, by default, against the batch mean of
    ``W batch``. The identity residual compares the loss at the minimizer to
    ``sigma^2 / ||w||^2``.

    Raises:
        SearchConvergenceError: If either search stage fails.
    """
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("check_tls_minimizer needs a nonempty batch")
    norms = _row_norms(W)
    projections = batch @ W.T
    batch_mean = projections.mean(axis=0)
    expected = batch_mean if mu is None else np.asarray(mu, dtype=np.float64)

    argmin = np.empty(W.shape[0])
    residuals = np.empty(W.shape[0])
    for k in range(W.shape[0]):
        u, norm2 = projections[:, k], norms[k] ** 2

        def loss(m: float, u: np.ndarray = u, norm2: float = norm2) -> float:
            return float(np.mean((u - m) ** 2) / norm2)

        def slope(m: float, u: np.ndarray = u, norm2: float = norm2) -> float:
            return float(-2.0 * np.mean(u - m) / norm2)

        lo, hi = float(u.min()), float(u.max())
        if hi > lo:
            coarse = optimize.minimize_scalar(loss, bracket=(lo, hi), method="golden")
            if not getattr(coarse, "success", True):
                raise SearchConvergenceError(
                    f"Golden-section search failed on row {k + 1}"
                )
            start = float(coarse.x)
        else:
            start = lo
        try:
            argmin[k] = optimize.newton(
                slope,
                start,
                fprime=lambda m, norm2=norm2: 2.0 / norm2,
                tol=1e-13,
                rtol=1e-13,
                maxiter=50,
            )
        except RuntimeError as e:
            raise SearchConvergenceError(
                f"Newton polish failed on row {k + 1}: {e}"
            ) from e
        residuals[k] = abs(loss(argmin[k]) - np.var(u) / norm2)

    gap = float(np.max(np.abs(argmin - expected)))
    return TLSReport(
        argmin=argmin,
        batch_mean=batch_mean,
        expected=expected,
        gap=gap,
        identity_residual=float(np.max(residuals)),
    )


def centroid_residuals(
    net: NetworkSpec, bn: BNState | None, layer: int, batch: np.ndarray
) -> np.ndarray:
    """Per-unit ``|<w_k, mean z_{layer-1}> - mu_k|`` over the batch."""
    bn = check_compatible(net, bn)
    if net.bn_layers and bn.mode is not BNMode.BATCH:
        raise StatsProvenanceError(
            "Centroid incidence only holds for statistics computed from the batch; "
            "the BN state is marked 'fixed'"
        )
    centroid = features_before(net, bn, np.atleast_2d(batch), layer).mean(axis=0)
    return np.abs(net.weight(layer) @ centroid - layer_threshold(net, bn, layer))


def centroid_incidence(
    net: NetworkSpec, bn: BNState | None, layer: int, batch: np.ndarray
) -> float:
    """Worst incidence residual of the propagated batch centroid at ``layer``."""
    return float(np.max(centroid_residuals(net, bn, layer, batch)))


def tls_fit_quality(
    net: NetworkSpec, bn: BNState | None, layer: int, batch: np.ndarray
) -> np.ndarray:
    """Per-unit TLS loss of the layer's actual hyperplanes on the batch."""
    z = features_before(net, bn, np.atleast_2d(batch), layer)
    W = net.weight(layer)
    residual = z @ W.T - layer_threshold(net, bn, layer)
    return np.mean(residual**2, axis=0) / _row_norms(W) ** 2


def facet_local_distance(
    net: NetworkSpec, bn: BNState | None, x: np.ndarray, j: int, k: int
) -> float:
    """Distance from x to the in-region affine extension of facet (j, k).

    Returns NaN when the facet's input-space normal vanishes in x's region.
    """
    normal = preactivation_normal(net, bn, x, j, k)
    if normal.degenerate:
        logger.debug("Degenerate facet normal for unit (%d, %d)", j, k)
        return math.nan
    z = features_before(net, bn, x, j)
    residual = net.weight(j)[k - 1] @ z - layer_threshold(net, bn, j)[k - 1]
    return float(abs(residual) / np.linalg.norm(normal.vector))


def facet_local_distances(
    net: NetworkSpec,
    bn: BNState | None,
    X: np.ndarray,
    layers: Iterable[int],
    chunk: int = 4096,
) -> np.ndarray:
    """Vectorized facet distances for many points.

    Returns an array of shape (n, sum of D_j over ``layers``), columns ordered
    by layer then unit. Degenerate normals give NaN.
    """
    bn = check_compatible(net, bn)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    layers = sorted(set(layers))
    for layer in layers:
        net._check_layer(layer)
    if not layers:
        return np.zeros((X.shape[0], 0))
    last = layers[-1]
    affines = {layer: layer_affine(net, bn, layer) for layer in range(1, last + 1)}
    thresholds = {layer: layer_threshold(net, bn, layer) for layer in layers}

    blocks = []
    for start in range(0, X.shape[0], chunk):
        z = X[start : start + chunk]
        A = np.tile(np.eye(net.input_dim), (z.shape[0], 1, 1))
        columns = []
        for layer in range(1, last + 1):
            W = net.weight(layer)
            u = z @ W.T
            normal = np.einsum("kd,mdi->mki", W, A)
            if layer in thresholds:
                norm = np.linalg.norm(normal, axis=2)
                with np.errstate(divide="ignore", invalid="ignore"):
                    distance = np.abs(u - thresholds[layer]) / norm
                distance[norm < 1e-14] = np.nan
                columns.append(distance)
            if layer == last:
                break
            scale, shift = affines[layer]
            h = u * scale + shift
            slopes = np.where(h >= 0.0, 1.0, net.alpha)
            A = (slopes * scale)[:, :, None] * normal
            z = slopes * h
        blocks.append(np.concatenate(columns, axis=1))
    return np.concatenate(blocks, axis=0)


def folded_distance(
    net: NetworkSpec,
    bn: BNState | None,
    x: np.ndarray,
    j: int,
    k: int,
    partition: Partition2D,
) -> float:
    """Exact distance from a 2-D point to folded hyperplane (j, k) in the box.

    Returns ``math.inf`` when the folded hyperplane has no segment in the box.
    ``net`` and ``bn`` must be the ones ``partition`` was traced from.
    """
    if net.input_dim != 2:
        raise NetworkError("folded_distance is exact only for 2-D inputs")
    segments = partition.folded_hyperplane(j, k)
    if segments.shape[0] == 0:
        return math.inf
    x = np.asarray(x, dtype=np.float64)
    return float(np.min(point_segment_distances(x, segments)))


def with_threshold(
    net: NetworkSpec, bn: BNState | None, j: int, k: int, value: float
) -> tuple[NetworkSpec, BNState | None]:
    """Move unit (j, k)'s hyperplane to ``<w, z> = value``, all else fixed."""
    if j in net.bn_layers:
        params = bn[j]
        mu = np.array(params.mu)
        # threshold = mu - beta * sigma / gamma
        shift = params.beta[k - 1] * params.sigma[k - 1] / params.gamma[k - 1]
        mu[k - 1] = value + shift
        return net, bn.with_layer(
            j, BNLayer(mu=mu, sigma=params.sigma, gamma=params.gamma, beta=params.beta)
        )
    c = np.array(net.bias(j))
    c[k - 1] = -value
    return net.with_bias(j, c), bn


@dataclass(frozen=True)
class FoldedTranslationReport:
    """Feature-space vs. input-space distances under two thresholds."""

    feature_distance: float
    feature_distance_alt: float
    folded_distance: float
    folded_distance_alt: float
    implication_holds: bool
    zero_iff_zero: bool

    @property
    def ok(self) -> bool:
        return self.implication_holds and self.zero_iff_zero


def check_folded_translation(
    net: NetworkSpec,
    bn: BNState | None,
    x: np.ndarray,
    j: int,
    k: int,
    mu_alt: float,
    partition: Partition2D | None = None,
    partition_alt: Partition2D | None = None,
    box: Sequence[float] = (-3.0, 3.0, -3.0, 3.0),
    tol: float = 1e-8,
) -> FoldedTranslationReport:
    """Check that moving a hyperplane closer in feature space moves its
    folded hyperplane closer to x in input space.

    The check is symmetric: whichever threshold is strictly closer in feature
    space (by more than ``tol``) must also be strictly closer in input space.
    It also checks that zero feature distance coincides with zero folded
    distance. Partitions are traced to depth j when not given.

    Raises:
        UnreachableFacetError: If either folded hyperplane misses the box.
    """
    x = np.asarray(x, dtype=np.float64)
    net_alt, bn_alt = with_threshold(net, bn, j, k, mu_alt)
    if partition is None:
        partition = trace(net, bn, j, box)
    if partition_alt is None:
        partition_alt = trace(net_alt, bn_alt, j, box)

    z = features_before(net, bn, x, j)
    w = net.weight(j)[k - 1]
    mu = layer_threshold(net, bn, j)[k - 1]
    d_feature = distance_to_hyperplane(z, Hyperplane(w, mu))
    d_feature_alt = distance_to_hyperplane(z, Hyperplane(w, mu_alt))
    d_folded = folded_distance(net, bn, x, j, k, partition)
    d_folded_alt = folded_distance(net_alt, bn_alt, x, j, k, partition_alt)
    if math.isinf(d_folded) or math.isinf(d_folded_alt):
        raise UnreachableFacetError(
            f"Folded hyperplane ({j}, {k}) has no segment inside the box"
        )

    implication = True
    if d_feature_alt - d_feature > tol:
        implication = d_folded_alt - d_folded > tol
    elif d_feature - d_feature_alt > tol:
        implication = d_folded - d_folded_alt > tol
    zero_iff_zero = ((d_feature <= tol) == (d_folded <= tol)) and (
        (d_feature_alt <= tol) == (d_folded_alt <= tol)
    )
    return FoldedTranslationReport(
        feature_distance=d_feature,
        feature_distance_alt=d_feature_alt,
        folded_distance=d_folded,
        folded_distance_alt=d_folded_alt,
        implication_holds=implication,
        zero_iff_zero=zero_iff_zero,
    )


@dataclass(frozen=True, eq=False)
class QMatrix:
    """Diagonal slope-over-sigma matrix of one layer for one region."""

    layer: int
    diagonal: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)


def _code_slopes(net: NetworkSpec, layer: int, code) -> np.ndarray:
    if isinstance(code, ActivationCode):
        if code.depth < layer:
            raise NetworkError(f"Code covers {code.depth} layers, need {layer}")
        return code.values(layer)
    values = np.asarray(code, dtype=np.float64)
    ActivationCode.from_values([values], net.alpha)
    return values


def q_matrix(net: NetworkSpec, bn: BNState | None, layer: int, code) -> QMatrix:
    """Q matrix of ``layer``: slope_i * gamma_i / sigma_i on the diagonal.

    ``code`` is either an ActivationCode or the layer's entries in
    ``{alpha, 1}``. Non-BN layers use sigma = gamma = 1.
    """
    slopes = _code_slopes(net, layer, code)
    if slopes.shape[0] != net.widths[layer]:
        raise NetworkError(
            f"Code has {slopes.shape[0]} entries, layer has {net.widths[layer]}"
        )
    if layer in net.bn_layers:
        params = check_compatible(net, bn)[layer]
        return QMatrix(layer=layer, diagonal=slopes * params.gamma / params.sigma)
    return QMatrix(layer=layer, diagonal=slopes.copy())


@dataclass(frozen=True)
class DihedralReport:
    """Angles (radians, in [0, pi/2]) between a layer-1 hyperplane and two facets."""

    theta_F_H: float
    theta_Fp_H: float
    theta_F_Fp: float

    @property
    def unfolded_F_Fp(self) -> float:
        return math.pi - self.theta_F_Fp


def _abs_cos_angle(a: np.ndarray, b: np.ndarray) -> float:
    denominator = np.linalg.norm(a) * np.linalg.norm(b)
    if denominator == 0.0:
        raise DegenerateHyperplaneError("Zero-norm normal in dihedral angle")
    cosine = abs(float(a @ b)) / denominator
    if cosine > 1.0 + ARCCOS_GUARD:
        raise ArithmeticError(f"arccos argument {cosine} exceeds 1 beyond rounding")
    return math.acos(min(cosine, 1.0))


def line_angle(d1: np.ndarray, d2: np.ndarray) -> float:
    """Angle in [0, pi/2] between two lines given by direction or normal vectors."""
    return _abs_cos_angle(
        np.asarray(d1, dtype=np.float64), np.asarray(d2, dtype=np.float64)
    )


def dihedral_angles(
    W1: np.ndarray,
    bn1: BNLayer | None,
    w2: np.ndarray,
    i: int,
    code: Sequence[float],
    code_alt: Sequence[float],
) -> DihedralReport:
    """Angles between H_{1,i} and the facets of a layer-2 unit on both sides of it.

    Args:
        W1: First-layer weights (D_1 x D_0).
        bn1: First-layer BN parameters, or None for a plain layer.
        w2: The layer-2 unit's weight row (length D_1).
        i: 1-based index of the layer-1 unit separating the two regions.
        code: Layer-1 slopes of region omega (entries alpha or 1).
        code_alt: Layer-1 slopes of the adjacent region omega'.

    Raises:
        NonAdjacentCodesError: Unless the codes differ exactly at entry i.
    """
    W1 = np.asarray(W1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    code_alt = np.asarray(code_alt, dtype=np.float64)
    differs = np.flatnonzero(code != code_alt)
    if differs.tolist() != [i - 1]:
        raise NonAdjacentCodesError(
            f"Codes must differ only at entry {i}; they differ at "
            f"{(differs + 1).tolist()}"
        )
    scale = np.ones(W1.shape[0]) if bn1 is None else bn1.gamma / bn1.sigma
    normal = W1.T @ (code * scale * w2)
    normal_alt = W1.T @ (code_alt * scale * w2)
    h = W1[i - 1]
    return DihedralReport(
        theta_F_H=_abs_cos_angle(normal, h),
        theta_Fp_H=_abs_cos_angle(normal_alt, h),
        theta_F_Fp=_abs_cos_angle(normal, normal_alt),
    )


def region_code_values(
    net: NetworkSpec, bn: BNState | None, x: np.ndarray, layer: int
) -> np.ndarray:
    """Slopes of ``layer`` at input x (entries alpha or 1)."""
    return activation_code(net, bn, x, depth=layer).values(layer)
