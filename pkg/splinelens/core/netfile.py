"""Reading and writing networks in the ``SPLINELENS-NET v1`` text format.

Layout::

    SPLINELENS-NET v1
    widths 2 6 6 1
    activation leaky 0.1
    mode batch            # optional, provenance of the BN statistics
    W 1
    <D_1 rows of D_0 values>
    c 1                   # optional
    <one row of D_1 values>
    BN 1                  # optional
    <mu row>
    <sigma row>
    <gamma row>
    <beta row>
    W 2
    ...

Blank lines and ``#`` comments are ignored. Values are written with 17
significant digits so a save/load cycle reproduces every float exactly.
"""

import logging
from collections.abc import Iterator
from pathlib import Path

import numpy as np

from .network import (
    Activation,
    BNLayer,
    BNMode,
    BNState,
    NetworkError,
    NetworkSpec,
)

logger = logging.getLogger(__name__)

HEADER = "SPLINELENS-NET v1"


class NetworkFileError(NetworkError):
    """Raised when a network file cannot be parsed."""

    def __init__(self, message: str, path: Path | None = None, line: int | None = None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


def _format_row(values: np.ndarray) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def dumps_network(net: NetworkSpec, bn: BNState | None = None) -> str:
    """Serialize a network (and optional BN state) to text."""
    lines = [HEADER, "widths " + " ".join(str(width) for width in net.widths)]
    if net.activation is Activation.LEAKY:
        lines.append(f"activation leaky {net.alpha:.17g}")
    else:
        lines.append(f"activation {net.activation.value}")
    if net.bn_layers and bn is not None:
        lines.append(f"mode {bn.mode.value}")
    for layer in range(1, net.depth + 1):
        lines.append(f"W {layer}")
        lines.extend(_format_row(row) for row in net.weight(layer))
        if layer in net.bn_layers:
            if bn is None or layer not in bn:
                raise NetworkError(f"Layer {layer} is a BN layer without parameters")
            params = bn[layer]
            lines.append(f"BN {layer}")
            lines.extend(
                _format_row(v)
                for v in (params.mu, params.sigma, params.gamma, params.beta)
            )
        elif np.any(net.bias(layer) != 0.0):
            lines.append(f"c {layer}")
            lines.append(_format_row(net.bias(layer)))
    return "\n".join(lines) + "\n"


def save_network(path: Path, net: NetworkSpec, bn: BNState | None = None) -> Path:
    """Write a network file, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_network(net, bn), encoding="utf-8")
    return path


class _Lines:
    """Cursor over significant lines, keeping 1-based line numbers."""

    def __init__(self, text: str, path: Path | None):
        self.path = path
        self._items: list[tuple[int, str]] = []
        for number, raw in enumerate(text.splitlines(), start=1):
            content = raw.split("#", 1)[0].strip()
            if content:
                self._items.append((number, content))
        self._pos = 0

    def __iter__(self) -> Iterator[tuple[int, str]]:
        return self

    def __next__(self) -> tuple[int, str]:
        if self._pos >= len(self._items):
            raise StopIteration
        item = self._items[self._pos]
        self._pos += 1
        return item

    def peek(self) -> tuple[int, str] | None:
        if self._pos >= len(self._items):
            return None
        return self._items[self._pos]

    def take(self, what: str) -> tuple[int, str]:
        item = next(self, None)
        if item is None:
            raise NetworkFileError(
                f"Unexpected end of file, expected {what}", self.path
            )
        return item

    def error(self, message: str, line: int) -> NetworkFileError:
        return NetworkFileError(message, self.path, line)

    def row(self, width: int, what: str) -> np.ndarray:
        number, content = self.take(what)
        try:
            values = np.array([float(token) for token in content.split()])
        except ValueError as e:
            raise self.error(f"Invalid number in {what}: {e}", number) from e
        if values.shape[0] != width:
            raise self.error(
                f"{what} has {values.shape[0]} values, expected {width}", number
            )
        return values


def loads_network(
    text: str, path: Path | None = None
) -> tuple[NetworkSpec, BNState | None]:
    """Parse network text into ``(net, bn)``; ``bn`` is None without BN layers."""
    lines = _Lines(text, path)
    number, content = lines.take("header")
    if content != HEADER:
        raise lines.error(f"Expected header '{HEADER}', got '{content}'", number)

    number, content = lines.take("widths line")
    tokens = content.split()
    if tokens[0] != "widths" or len(tokens) < 3:
        raise lines.error("Expected 'widths D_0 D_1 ... D_L' with L >= 1", number)
    try:
        widths = [int(token) for token in tokens[1:]]
    except ValueError as e:
        raise lines.error(f"Invalid width: {e}", number) from e
    if any(width <= 0 for width in widths):
        raise lines.error("Widths must be positive", number)

    number, content = lines.take("activation line")
    tokens = content.split()
    if tokens[0] != "activation" or len(tokens) not in (2, 3):
        raise lines.error("Expected 'activation relu|leaky <alpha>|abs'", number)
    try:
        activation = Activation(tokens[1])
        alpha = float(tokens[2]) if len(tokens) == 3 else None
    except ValueError as e:
        raise lines.error(f"Invalid activation: {e}", number) from e
    if (activation is Activation.LEAKY) != (alpha is not None):
        raise lines.error("Only the leaky activation takes an alpha", number)

    mode = BNMode.BATCH
    peeked = lines.peek()
    if peeked is not None and peeked[1].split()[0] == "mode":
        number, content = lines.take("mode line")
        try:
            mode = BNMode(content.split()[1])
        except (IndexError, ValueError) as e:
            raise lines.error("Expected 'mode batch|fixed'", number) from e

    depth = len(widths) - 1
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    bn_layers: dict[int, BNLayer] = {}
    for layer in range(1, depth + 1):
        number, content = lines.take(f"'W {layer}'")
        if content.split() != ["W", str(layer)]:
            raise lines.error(f"Expected 'W {layer}', got '{content}'", number)
        rows = [
            lines.row(widths[layer - 1], f"row {i + 1} of W_{layer}")
            for i in range(widths[layer])
        ]
        weights.append(np.vstack(rows))
        bias = np.zeros(widths[layer])
        while (peeked := lines.peek()) is not None and peeked[1].split()[0] in (
            "c",
            "BN",
        ):
            keyword, *rest = peeked[1].split()
            if rest != [str(layer)]:
                break
            lines.take(keyword)
            if keyword == "c":
                bias = lines.row(widths[layer], f"c_{layer}")
            else:
                if layer == depth:
                    raise lines.error("The linear head cannot carry BN", peeked[0])
                mu, sigma, gamma, beta = (
                    lines.row(widths[layer], f"{name}_{layer}")
                    for name in ("mu", "sigma", "gamma", "beta")
                )
                try:
                    bn_layers[layer] = BNLayer(
                        mu=mu, sigma=sigma, gamma=gamma, beta=beta
                    )
                except NetworkError as e:
                    raise lines.error(str(e), peeked[0]) from e
        biases.append(bias)

    leftover = lines.peek()
    if leftover is not None:
        raise lines.error(f"Unexpected content '{leftover[1]}'", leftover[0])

    try:
        net = NetworkSpec.build(
            weights,
            biases,
            activation=activation,
            alpha=alpha,
            bn_layers=bn_layers.keys(),
        )
    except NetworkError as e:
        raise NetworkFileError(str(e), path) from e
    bn = BNState(layers=bn_layers, mode=mode) if bn_layers else None
    return net, bn


def load_network(path: Path) -> tuple[NetworkSpec, BNState | None]:
    """Read a network file.

    Raises:
        NetworkFileError: On syntax or shape errors.
        OSError: If the file cannot be read.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"Could not read network file {path}: {e}") from e
    net, bn = loads_network(text, path)
    logger.info("Loaded %d-layer network from %s", net.depth, path)
    return net, bn
