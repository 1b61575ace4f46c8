"""Batch-normalized piecewise-linear networks.

Layers are indexed 1..L with ``z_0 = x`` and ``W_l`` mapping R^{D_{l-1}} to
R^{D_l}. Layer ``l < L`` applies either the plain affine map ``W z + c`` or the
batch-normalized map ``(W z - mu) / sigma * gamma + beta``, followed by the
activation. Layer L is a linear head ``W_L z + c_L``.

Internally every layer is reduced to the affine form ``h = s * (W z) + t``
(``s = gamma / sigma``, ``t = beta - mu * gamma / sigma`` on BN layers,
``s = 1``, ``t = c`` otherwise), which is what region maps, facet normals and
partition tracing are built from.
"""

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum

import numpy as np

logger = logging.getLogger(__name__)

NORMAL_EPS = 1e-14


class NetworkError(ValueError):
    """Raised when a network, BN state or input is malformed."""

    pass


class GammaAbsorptionError(NetworkError):
    """Raised when gamma cannot be folded into the next layer."""

    pass


class Activation(StrEnum):
    """Supported piecewise-linear activation families."""

    RELU = "relu"
    LEAKY = "leaky"
    ABS = "abs"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


def activation_slope(activation: Activation | str, alpha: float | None = None) -> float:
    """Negative-side slope for an activation family."""
    activation = Activation(activation)
    if activation is Activation.RELU:
        return 0.0
    if activation is Activation.ABS:
        return -1.0
    if alpha is None or not 0.0 < alpha < 1.0:
        raise NetworkError(f"leaky activation needs 0 < alpha < 1, got {alpha}")
    return float(alpha)


def activate(h: np.ndarray, alpha: float) -> np.ndarray:
    """Apply ``a(h) = h`` for ``h >= 0`` and ``alpha * h`` otherwise."""
    return np.where(h >= 0.0, h, alpha * h)


def activation_derivative(h: np.ndarray, alpha: float) -> np.ndarray:
    """Slope of the activation; the kink at 0 takes slope 1."""
    return np.where(h >= 0.0, 1.0, alpha)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Weights, biases and activation of an L-layer network."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: Activation
    alpha: float
    bn_layers: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if not self.weights:
            raise NetworkError("A network needs at least one layer")
        weights = tuple(_frozen(W) for W in self.weights)
        for index, W in enumerate(weights, start=1):
            if W.ndim != 2 or W.shape[0] == 0 or W.shape[1] == 0:
                raise NetworkError(
                    f"W_{index} must be a nonempty matrix, got {W.shape}"
                )
            if index > 1 and W.shape[1] != weights[index - 2].shape[0]:
                raise NetworkError(
                    f"W_{index} has {W.shape[1]} columns but layer {index - 1} "
                    f"has width {weights[index - 2].shape[0]}"
                )
        if len(self.biases) != len(weights):
            raise NetworkError(
                f"Expected {len(weights)} bias vectors, got {len(self.biases)}"
            )
        biases = tuple(_frozen(c) for c in self.biases)
        for index, (W, c) in enumerate(zip(weights, biases, strict=True), start=1):
            if c.shape != (W.shape[0],):
                raise NetworkError(f"c_{index} must have shape ({W.shape[0]},)")
        activation = Activation(self.activation)
        if activation is Activation.LEAKY:
            slope = activation_slope(activation, self.alpha)
        else:
            slope = activation_slope(activation)
            if self.alpha is not None and float(self.alpha) != slope:
                raise NetworkError(
                    f"{activation} activation requires alpha={slope}, got {self.alpha}"
                )
        depth = len(weights)
        bn_layers = frozenset(int(layer) for layer in self.bn_layers)
        bad = sorted(layer for layer in bn_layers if not 1 <= layer < depth)
        if bad:
            raise NetworkError(
                f"BN layers must lie in 1..{depth - 1}; the linear head has no BN "
                f"(got {bad})"
            )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "activation", activation)
        object.__setattr__(self, "alpha", slope)
        object.__setattr__(self, "bn_layers", bn_layers)

    @classmethod
    def build(
        cls,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray] | None = None,
        activation: Activation | str = Activation.RELU,
        alpha: float | None = None,
        bn_layers: Iterable[int] = (),
    ) -> "NetworkSpec":
        """Construct a network, defaulting biases to zero."""
        weights = [np.asarray(W, dtype=np.float64) for W in weights]
        if biases is None:
            biases = [np.zeros(W.shape[0]) for W in weights]
        activation = Activation(activation)
        if alpha is None and activation is not Activation.LEAKY:
            alpha = activation_slope(activation)
        return cls(
            weights=tuple(weights),
            biases=tuple(biases),
            activation=activation,
            alpha=alpha,
            bn_layers=frozenset(bn_layers),
        )

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1], *(W.shape[0] for W in self.weights))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    def weight(self, layer: int) -> np.ndarray:
        self._check_layer(layer)
        return self.weights[layer - 1]

    def bias(self, layer: int) -> np.ndarray:
        self._check_layer(layer)
        return self.biases[layer - 1]

    def _check_layer(self, layer: int) -> None:
        if not 1 <= layer <= self.depth:
            raise NetworkError(f"Layer {layer} outside 1..{self.depth}")

    def with_weights(self, layer: int, W: np.ndarray) -> "NetworkSpec":
        weights = list(self.weights)
        weights[layer - 1] = W
        return replace(self, weights=tuple(weights))

    def with_bias(self, layer: int, c: np.ndarray) -> "NetworkSpec":
        biases = list(self.biases)
        biases[layer - 1] = c
        return replace(self, biases=tuple(biases))


@dataclass(frozen=True, eq=False)
class BNLayer:
    """Normalization parameters of one layer."""

    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        for name in ("mu", "sigma", "gamma", "beta"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        shapes = {self.mu.shape, self.sigma.shape, self.gamma.shape, self.beta.shape}
        if len(shapes) != 1 or self.mu.ndim != 1:
            raise NetworkError("mu, sigma, gamma, beta must be vectors of equal length")
        if not np.all(self.sigma > 0.0):
            raise NetworkError("sigma must be strictly positive")

    @classmethod
    def from_stats(
        cls,
        mu: np.ndarray,
        sigma: np.ndarray,
        gamma: np.ndarray | None = None,
        beta: np.ndarray | None = None,
    ) -> "BNLayer":
        mu = np.asarray(mu, dtype=np.float64)
        return cls(
            mu=mu,
            sigma=sigma,
            gamma=np.ones_like(mu) if gamma is None else gamma,
            beta=np.zeros_like(mu) if beta is None else beta,
        )

    @property
    def width(self) -> int:
        return self.mu.shape[0]


class BNMode(StrEnum):
    """Provenance of BN statistics."""

    BATCH = "batch"
    FIXED = "fixed"


@dataclass(frozen=True, eq=False)
class BNState:
    """BN parameters for every BN layer of a network."""

    layers: Mapping[int, BNLayer] = field(default_factory=dict)
    mode: BNMode = BNMode.FIXED

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", dict(sorted(self.layers.items())))
        object.__setattr__(self, "mode", BNMode(self.mode))

    def __getitem__(self, layer: int) -> BNLayer:
        return self.layers[layer]

    def __contains__(self, layer: int) -> bool:
        return layer in self.layers

    def with_layer(self, layer: int, params: BNLayer) -> "BNState":
        layers = dict(self.layers)
        layers[layer] = params
        return replace(self, layers=layers)

    def with_mode(self, mode: BNMode | str) -> "BNState":
        return replace(self, mode=BNMode(mode))


EMPTY_BN = BNState()


def check_compatible(net: NetworkSpec, bn: BNState | None) -> BNState:
    """Validate that ``bn`` covers exactly the BN layers of ``net``."""
    bn = EMPTY_BN if bn is None else bn
    missing = sorted(net.bn_layers - set(bn.layers))
    if missing:
        raise NetworkError(f"No BN parameters for layers {missing}")
    for layer in net.bn_layers:
        if bn[layer].width != net.widths[layer]:
            raise NetworkError(
                f"BN layer {layer} has width {bn[layer].width}, "
                f"expected {net.widths[layer]}"
            )
    return bn


def layer_affine(
    net: NetworkSpec, bn: BNState | None, layer: int
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(s, t)`` with ``h_layer = s * (W_layer z) + t``."""
    net._check_layer(layer)
    if layer in net.bn_layers:
        if bn is None or layer not in bn:
            raise NetworkError(f"No BN parameters for layer {layer}")
        params = bn[layer]
        scale = params.gamma / params.sigma
        return scale, params.beta - params.mu * scale
    return np.ones(net.widths[layer]), np.array(net.bias(layer))


def layer_threshold(net: NetworkSpec, bn: BNState | None, layer: int) -> np.ndarray:
    """Offsets ``mu_eff`` such that unit k's hyperplane is ``<w_k, z> = mu_eff_k``."""
    scale, shift = layer_affine(net, bn, layer)
    return -shift / scale


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Pre-activations ``h_l`` and activations ``z_l`` for l = 1..L."""

    pre: tuple[np.ndarray, ...]
    post: tuple[np.ndarray, ...]

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]

    def features(self, layer: int) -> np.ndarray:
        """Input of ``layer``, i.e. ``z_{layer-1}``; needs ``layer >= 2``."""
        return self.post[layer - 2]


def _as_inputs(net: NetworkSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise NetworkError(
            f"Input has shape {x.shape}, expected last dimension {net.input_dim}"
        )
    return x


def forward(
    net: NetworkSpec,
    bn: BNState | None,
    x: np.ndarray,
    upto: int | None = None,
) -> ForwardTrace:
    """Evaluate the network on one input vector or a batch of rows.

    Args:
        net: Network.
        bn: BN parameters for ``net.bn_layers`` (may be None without BN).
        x: Input of shape (D_0,) or (n, D_0).
        upto: Stop after this layer (defaults to L).

    Returns:
        ForwardTrace of per-layer pre-activations and activations.
    """
    bn = check_compatible(net, bn)
    z = _as_inputs(net, x)
    upto = net.depth if upto is None else upto
    pre, post = [], []
    for layer in range(1, upto + 1):
        scale, shift = layer_affine(net, bn, layer)
        h = (z @ net.weight(layer).T) * scale + shift
        z = h if layer == net.depth else activate(h, net.alpha)
        pre.append(h)
        post.append(z)
    return ForwardTrace(pre=tuple(pre), post=tuple(post))


def features_before(
    net: NetworkSpec, bn: BNState | None, x: np.ndarray, layer: int
) -> np.ndarray:
    """Return ``z_{layer-1}(x)``, the input of ``layer``."""
    if layer == 1:
        return _as_inputs(net, x)
    return forward(net, bn, x, upto=layer - 1).post[-1]


@dataclass(frozen=True, eq=False)
class ActivationCode:
    """Sign pattern of the pre-activations of layers 1..len(signs).

    ``signs[l-1][i]`` is True where ``h_{l,i} >= 0`` (slope 1) and False where
    the unit takes the negative-side slope ``alpha``.
    """

    signs: tuple[np.ndarray, ...]
    alpha: float

    def __post_init__(self) -> None:
        signs = []
        for layer_signs in self.signs:
            layer_signs = np.array(layer_signs, dtype=bool)
            layer_signs.setflags(write=False)
            signs.append(layer_signs)
        object.__setattr__(self, "signs", tuple(signs))

    @classmethod
    def from_values(
        cls, values: Sequence[Sequence[float]], alpha: float
    ) -> "ActivationCode":
        """Build a code from per-layer entries in ``{alpha, 1}``."""
        signs = []
        for layer_index, layer_values in enumerate(values, start=1):
            layer_values = np.asarray(layer_values, dtype=np.float64)
            bad = ~(np.isclose(layer_values, 1.0) | np.isclose(layer_values, alpha))
            if np.any(bad):
                raise NetworkError(
                    f"Code entries of layer {layer_index} must be in "
                    f"{{{alpha}, 1}}, got {layer_values[bad].tolist()}"
                )
            signs.append(np.isclose(layer_values, 1.0))
        return cls(signs=tuple(signs), alpha=alpha)

    @property
    def depth(self) -> int:
        return len(self.signs)

    def values(self, layer: int) -> np.ndarray:
        """Slopes of layer ``layer`` (entries ``alpha`` or 1)."""
        return np.where(self.signs[layer - 1], 1.0, self.alpha)

    def truncate(self, depth: int) -> "ActivationCode":
        return ActivationCode(signs=self.signs[:depth], alpha=self.alpha)

    @property
    def key(self) -> str:
        """Compact text form, e.g. ``"10|011"`` (1 = non-negative side)."""
        return "|".join(
            "".join("1" if bit else "0" for bit in layer) for layer in self.signs
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ActivationCode):
            return NotImplemented
        return self.alpha == other.alpha and self.key == other.key

    def __hash__(self) -> int:
        return hash((self.alpha, self.key))


def activation_code(
    net: NetworkSpec, bn: BNState | None, x: np.ndarray, depth: int | None = None
) -> ActivationCode:
    """Activation code of a single input over layers 1..depth (default L-1)."""
    x = _as_inputs(net, x)
    if x.ndim != 1:
        raise NetworkError("activation_code takes a single input vector")
    depth = net.depth - 1 if depth is None else depth
    if depth <= 0:
        return ActivationCode(signs=(), alpha=net.alpha)
    trace = forward(net, bn, x, upto=depth)
    return ActivationCode(signs=tuple(h >= 0.0 for h in trace.pre), alpha=net.alpha)


def code_matrix(
    net: NetworkSpec, bn: BNState | None, X: np.ndarray, depth: int
) -> np.ndarray:
    """Boolean sign matrix (n, D_1 + ... + D_depth) for a batch of inputs."""
    X = _as_inputs(net, X)
    if depth == 0:
        return np.zeros((X.shape[0], 0), dtype=bool)
    trace = forward(net, bn, X, upto=depth)
    return np.concatenate([h >= 0.0 for h in trace.pre], axis=1)


@dataclass(frozen=True, eq=False)
class RegionAffine:
    """Affine map ``x -> A x + b`` onto the input ``z_{layer-1}`` of ``layer``."""

    layer: int
    A: np.ndarray
    b: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.A.T + self.b


def next_region_affine(
    net: NetworkSpec,
    bn: BNState | None,
    affine: RegionAffine,
    slopes: np.ndarray,
) -> RegionAffine:
    """Compose ``affine`` (onto layer j's input) with layer j under ``slopes``."""
    layer = affine.layer
    scale, shift = layer_affine(net, bn, layer)
    W = net.weight(layer)
    gain = slopes * scale
    return RegionAffine(
        layer=layer + 1,
        A=gain[:, None] * (W @ affine.A),
        b=gain * (W @ affine.b) + slopes * shift,
    )


def identity_affine(net: NetworkSpec) -> RegionAffine:
    return RegionAffine(layer=1, A=np.eye(net.input_dim), b=np.zeros(net.input_dim))


def region_affine(
    net: NetworkSpec, bn: BNState | None, code: ActivationCode, j: int
) -> RegionAffine:
    """Affine map from input space to ``z_{j-1}`` on the region of ``code``.

    Args:
        net: Network.
        bn: BN parameters.
        code: Activation code covering at least layers 1..j-1.
        j: Target layer, 1 <= j <= L.

    Returns:
        RegionAffine with ``A`` of shape (D_{j-1}, D_0).
    """
    bn = check_compatible(net, bn)
    net._check_layer(j)
    if code.depth < j - 1:
        raise NetworkError(f"Code covers {code.depth} layers, need {j - 1}")
    affine = identity_affine(net)
    for layer in range(1, j):
        slopes = code.values(layer)
        if slopes.shape[0] != net.widths[layer]:
            raise NetworkError(
                f"Code layer {layer} has {slopes.shape[0]} entries, "
                f"expected {net.widths[layer]}"
            )
        affine = next_region_affine(net, bn, affine, slopes)
    return affine


@dataclass(frozen=True, eq=False)
class FacetNormal:
    """Input-space normal ``A^T w_{j,k}``; ``degenerate`` when it vanishes."""

    vector: np.ndarray
    degenerate: bool


def preactivation_normal(
    net: NetworkSpec, bn: BNState | None, x: np.ndarray, j: int, k: int
) -> FacetNormal:
    """Normal of the facet of folded hyperplane (j, k) through x's region.

    ``k`` is 1-based like ``j``.
    """
    net._check_layer(j)
    if not 1 <= k <= net.widths[j]:
        raise NetworkError(f"Unit {k} outside 1..{net.widths[j]} of layer {j}")
    code = activation_code(net, bn, x, depth=j - 1)
    affine = region_affine(net, bn, code, j)
    normal = affine.A.T @ net.weight(j)[k - 1]
    return FacetNormal(
        vector=normal, degenerate=bool(np.linalg.norm(normal) < NORMAL_EPS)
    )


def absorb_gamma(
    net: NetworkSpec, bn: BNState | None
) -> tuple[NetworkSpec, BNState | None]:
    """Fold every BN gamma into the next layer's weights.

    Uses ``a(g u) = g a(u)`` for ``g > 0``: gamma_l scales column k of
    ``W_{l+1}``, and beta_l becomes ``beta_l / gamma_l``.

    Raises:
        GammaAbsorptionError: If any gamma entry is not strictly positive.
    """
    if bn is None or not net.bn_layers:
        return net, bn
    bn = check_compatible(net, bn)
    for layer in sorted(net.bn_layers):
        gamma = bn[layer].gamma
        if np.any(gamma <= 0.0):
            units = (np.flatnonzero(gamma <= 0.0) + 1).tolist()
            raise GammaAbsorptionError(
                f"gamma must be strictly positive to absorb it; layer {layer} "
                f"units {units} are not"
            )
    if all(np.all(bn[layer].gamma == 1.0) for layer in net.bn_layers):
        return net, bn

    absorbed_net, absorbed_bn = net, bn
    for layer in sorted(net.bn_layers):
        params = bn[layer]
        W_next = absorbed_net.weight(layer + 1) * params.gamma[None, :]
        absorbed_net = absorbed_net.with_weights(layer + 1, W_next)
        absorbed_bn = absorbed_bn.with_layer(
            layer,
            BNLayer(
                mu=params.mu,
                sigma=params.sigma,
                gamma=np.ones_like(params.gamma),
                beta=params.beta / params.gamma,
            ),
        )
        logger.debug("Absorbed gamma of layer %d into W_%d", layer, layer + 1)
    return absorbed_net, absorbed_bn


def glorot_weights(fan_out: int, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform weights on +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def glorot_network(
    widths: Sequence[int],
    activation: Activation | str,
    rng: np.random.Generator,
    alpha: float | None = None,
    random_bias: bool = False,
    bn_layers: Iterable[int] = (),
) -> NetworkSpec:
    """Draw a network with Glorot-uniform weights.

    With ``random_bias`` the biases are drawn on the same interval as the
    layer's weights; otherwise they are zero.
    """
    if len(widths) < 2:
        raise NetworkError("widths must list D_0..D_L with L >= 1")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True):
        weights.append(glorot_weights(fan_out, fan_in, rng))
        if random_bias:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        else:
            biases.append(np.zeros(fan_out))
    return NetworkSpec.build(
        weights, biases, activation=activation, alpha=alpha, bn_layers=bn_layers
    )
