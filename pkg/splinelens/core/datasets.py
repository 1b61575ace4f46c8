"""Synthetic datasets and their CSV files.

Every generator is a pure function of its parameters and seed; randomness
comes from ``make_rng(seed, <generator name>)``.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path

import numpy as np

from ..utils.random import make_rng
from ..utils.reports import format_value, write_csv

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised for invalid generator parameters or malformed dataset files."""

    pass


class TwoClassKind(StrEnum):
    CLUSTERS = "clusters"
    RINGS = "rings"
    XOR = "xor"


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Inputs (n x D_0), optional integer labels and provenance text."""

    inputs: np.ndarray
    labels: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[0] < 1 or inputs.shape[1] < 1:
            raise DatasetError(
                f"inputs must be a nonempty matrix, got shape {inputs.shape}"
            )
        object.__setattr__(self, "inputs", inputs)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (inputs.shape[0],):
                count = labels.shape[0] if labels.ndim else 0
                raise DatasetError(f"{count} labels for {inputs.shape[0]} inputs")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, rows: np.ndarray) -> "LabeledDataset":
        labels = None if self.labels is None else self.labels[rows]
        return LabeledDataset(self.inputs[rows], labels, self.provenance)


def _provenance(generator: str, seed: int, **params) -> str:
    parts = [f"generator={generator}"]
    parts += [f"{name}={format_value(value)}" for name, value in params.items()]
    parts.append(f"seed={seed}")
    return ";".join(parts)


def star2d(
    n: int = 50,
    arms: int = 5,
    r0: float = 1.0,
    amplitude: float = 0.3,
    seed: int = 0,
) -> LabeledDataset:
    """Points on the star curve ``r(t) = r0 (1 + amplitude cos(arms t))``.

    Angles are stratified: point i gets a uniform draw inside the i-th of n
    equal angular sectors, so the sample covers every arm.
    """
    if n < 1:
        raise DatasetError(f"n must be >= 1, got {n}")
    if arms < 3:
        raise DatasetError(f"A star needs at least 3 arms, got {arms}")
    rng = make_rng(seed, "star2d")
    angles = 2.0 * np.pi * (np.arange(n) + rng.uniform(size=n)) / n
    radius = r0 * (1.0 + amplitude * np.cos(arms * angles))
    inputs = np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])
    return LabeledDataset(
        inputs,
        provenance=_provenance(
            "star2d", seed, n=n, arms=arms, r0=r0, amplitude=amplitude
        ),
    )


def star_radius(
    points: np.ndarray, arms: int = 5, r0: float = 1.0, amplitude: float = 0.3
) -> np.ndarray:
    """Curve radius at each point's angle (for membership checks)."""
    angles = np.arctan2(points[:, 1], points[:, 0])
    return r0 * (1.0 + amplitude * np.cos(arms * angles))


def two_class_2d(
    kind: TwoClassKind | str = TwoClassKind.CLUSTERS,
    n: int = 200,
    noise: float = 0.1,
    seed: int = 0,
) -> LabeledDataset:
    """Balanced binary 2-D tasks.

    ``clusters``: Gaussian blobs at (-1, 0) and (1, 0).
    ``rings``: class 0 on radius 0.5, class 1 on radius 1.5.
    ``xor``: quadrant corners (+-1, +-1), label 1 where the signs differ.
    """
    try:
        kind = TwoClassKind(kind)
    except ValueError as e:
        raise DatasetError(f"Unknown two-class kind '{kind}'") from e
    if n < 2:
        raise DatasetError(f"n must be >= 2, got {n}")
    if noise < 0.0:
        raise DatasetError(f"noise must be >= 0, got {noise}")
    rng = make_rng(seed, "two_class_2d", kind.value)
    labels = np.arange(n) % 2

    if kind is TwoClassKind.CLUSTERS:
        centers = np.where(labels[:, None] == 0, [-1.0, 0.0], [1.0, 0.0])
        inputs = centers + noise * rng.standard_normal((n, 2))
    elif kind is TwoClassKind.RINGS:
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n)
        radius = np.where(labels == 0, 0.5, 1.5) + noise * rng.standard_normal(n)
        inputs = np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])
    else:
        corner = np.arange(n) // 2 % 2
        signs_x = np.where(corner == 0, 1.0, -1.0)
        signs_y = np.where(labels == 1, -signs_x, signs_x)
        inputs = np.column_stack([signs_x, signs_y])
        inputs += noise * rng.standard_normal((n, 2))

    provenance = _provenance("two_class_2d", seed, kind=kind.value, n=n, noise=noise)
    return LabeledDataset(inputs, labels, provenance=provenance)


def gaussian_inputs(
    n: int,
    dim: int,
    mean: Sequence[float] | float = 0.0,
    diag_cov: Sequence[float] | float = 1.0,
    seed: int = 0,
) -> LabeledDataset:
    """``n`` i.i.d. draws from N(mean, diag(diag_cov))."""
    if n < 1 or dim < 1:
        raise DatasetError(f"n and dim must be >= 1, got {n}, {dim}")
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (dim,))
    diag_cov = np.broadcast_to(np.asarray(diag_cov, dtype=np.float64), (dim,))
    if np.any(diag_cov < 0.0):
        raise DatasetError("diag_cov must be elementwise non-negative")
    rng = make_rng(seed, "gaussian_inputs")
    inputs = mean + np.sqrt(diag_cov) * rng.standard_normal((n, dim))
    provenance = _provenance("gaussian_inputs", seed, n=n, dim=dim)
    return LabeledDataset(inputs, provenance=provenance)


def matched_gaussian(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """Gaussian points with the dataset's per-coordinate mean and variance."""
    return gaussian_inputs(
        len(dataset),
        dataset.dim,
        mean=dataset.inputs.mean(axis=0),
        diag_cov=dataset.inputs.var(axis=0),
        seed=seed,
    )


def save_dataset(path: Path, dataset: LabeledDataset) -> Path:
    """Write ``x0,...,x{D-1}[,label]`` rows after a ``# <provenance>`` line."""
    path = Path(path)
    columns = [f"x{i}" for i in range(dataset.dim)]
    if dataset.labels is not None:
        columns.append("label")
        rows = (
            [*row, int(label)]
            for row, label in zip(dataset.inputs, dataset.labels, strict=True)
        )
    else:
        rows = (list(row) for row in dataset.inputs)
    write_csv(path, columns, rows)
    text = path.read_text(encoding="utf-8")
    path.write_text(f"# {dataset.provenance}\n{text}", encoding="utf-8")
    return path


def load_dataset(path: Path) -> LabeledDataset:
    """Read a dataset written by :func:`save_dataset`.

    Raises:
        DatasetError: On a malformed header or rows.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DatasetError(f"Could not read dataset {path}: {e}") from e
    provenance = ""
    if lines and lines[0].startswith("#"):
        provenance = lines.pop(0)[1:].strip()
    if not lines:
        raise DatasetError(f"{path}: missing header")
    header = lines[0].split(",")
    has_labels = header[-1] == "label"
    features = header[:-1] if has_labels else header
    if features != [f"x{i}" for i in range(len(features))] or not features:
        raise DatasetError(
            f"{path}: header must be x0,...,x{{D-1}}[,label], got {lines[0]}"
        )
    try:
        rows = [line.split(",") for line in lines[1:] if line.strip()]
        table = np.array([[float(cell) for cell in row] for row in rows])
    except ValueError as e:
        raise DatasetError(f"{path}: {e}") from e
    if table.ndim != 2 or table.shape[1] != len(header):
        raise DatasetError(f"{path}: rows do not match the {len(header)}-column header")
    labels = table[:, -1].astype(np.int64) if has_labels else None
    dataset = LabeledDataset(table[:, : len(features)], labels, provenance)
    logger.info("Loaded %d points (D=%d) from %s", len(dataset), dataset.dim, path)
    return dataset


def make_dataset(
    kind: str, n: int, seed: int, noise: float = 0.1, dim: int = 2
) -> LabeledDataset:
    """Build a dataset by generator name.

    Names: ``star``, ``clusters``, ``rings``, ``xor`` and ``gaussian``.
    """
    if kind == "star":
        return star2d(n=n, seed=seed)
    if kind == "gaussian":
        return gaussian_inputs(n, dim, seed=seed)
    if kind in {member.value for member in TwoClassKind}:
        return two_class_2d(kind, n=n, noise=noise, seed=seed)
    raise DatasetError(
        f"Unknown dataset '{kind}'; expected star, clusters, rings, xor or gaussian"
    )
