"""Exact input-space partitions of networks with 2-D inputs.

The box is subdivided layer by layer. Inside each current region the network
is affine, so unit k of layer j is zero along one straight line there; every
region is cut by the lines of all units of the layer (layer-major,
unit-minor order). The result is a tiling of the box by convex polygons, each
carrying its activation code and affine maps, plus the labeled boundary
segments (pieces of the folded hyperplanes).
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..utils.reports import write_csv
from .network import (
    NORMAL_EPS,
    ActivationCode,
    BNState,
    NetworkError,
    NetworkSpec,
    RegionAffine,
    check_compatible,
    code_matrix,
    forward,
    identity_affine,
    layer_affine,
    next_region_affine,
)

logger = logging.getLogger(__name__)

DEFAULT_BOX = (-3.0, 3.0, -3.0, 3.0)
DEFAULT_REGION_BUDGET = 1_000_000
GEO_TOL = 1e-12
SLIVER_RTOL = 1e-12
# Distance within which a polygon vertex counts as lying on a traced chord.
ON_SEGMENT_TOL = 1e-9


class PartitionError(ValueError):
    """Raised for invalid tracing requests."""

    pass


class RegionBudgetError(PartitionError):
    """Raised when tracing would exceed the configured region budget."""

    pass


Box = tuple[float, float, float, float]


def as_box(box: Sequence[float]) -> Box:
    """Validate ``(xmin, xmax, ymin, ymax)``."""
    if len(box) != 4:
        raise PartitionError(f"Box must be (xmin, xmax, ymin, ymax), got {box}")
    xmin, xmax, ymin, ymax = (float(v) for v in box)
    if not (xmin < xmax and ymin < ymax) or not np.all(np.isfinite(box)):
        raise PartitionError(f"Degenerate box {box}")
    return xmin, xmax, ymin, ymax


def box_polygon(box: Box) -> np.ndarray:
    xmin, xmax, ymin, ymax = box
    return np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise order)."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Counter-clockwise convex polygon."""

    vertices: np.ndarray

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        area = 0.5 * np.sum(cross)
        cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area)
        cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area)
        return np.array([cx, cy])

    def interior_points(self, count: int = 5) -> np.ndarray:
        """Deterministic interior samples: the centroid, then points halfway
        from the centroid to successive vertices."""
        center = self.centroid
        points = [center]
        n = len(self.vertices)
        for index in range(count - 1):
            points.append(0.5 * (center + self.vertices[index % n]))
        return np.array(points)

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Mask of points at least ``margin`` inside every edge."""
        points = np.atleast_2d(points)
        inside = np.ones(points.shape[0], dtype=bool)
        n = len(self.vertices)
        for index in range(n):
            p, q = self.vertices[index], self.vertices[(index + 1) % n]
            edge = q - p
            length = np.hypot(*edge)
            if length == 0.0:
                continue
            cross = edge[0] * (points[:, 1] - p[1]) - edge[1] * (points[:, 0] - p[0])
            inside &= cross / length >= margin
        return inside


@dataclass(frozen=True, eq=False)
class Region:
    """One cell of a traced partition.

    ``affines[j-1]`` maps input space to the input of layer j on this region,
    for j = 1..min(depth + 1, L).
    """

    polygon: ConvexPolygon
    code: ActivationCode
    affines: tuple[RegionAffine, ...]


@dataclass(frozen=True, eq=False)
class Partition2D:
    """Regions and labeled boundary segments of a traced partition.

    ``segments`` has rows ``(x1, y1, x2, y2)`` and ``labels`` rows
    ``(layer, unit)`` with 1-based indices.
    """

    box: Box
    depth: int
    widths: tuple[int, ...]
    regions: tuple[Region, ...]
    segments: np.ndarray
    labels: np.ndarray
    slivers_merged: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def box_area(self) -> float:
        xmin, xmax, ymin, ymax = self.box
        return (xmax - xmin) * (ymax - ymin)

    @property
    def total_area(self) -> float:
        return float(sum(region.polygon.area for region in self.regions))

    def codes(self) -> list[str]:
        return [region.code.key for region in self.regions]

    def folded_hyperplane(self, j: int, k: int) -> np.ndarray:
        """Segments labeled (j, k), shape (m, 4)."""
        if not 1 <= j <= self.depth:
            raise PartitionError(f"Layer {j} is beyond the traced depth {self.depth}")
        mask = (self.labels[:, 0] == j) & (self.labels[:, 1] == k)
        return self.segments[mask]

    def segments_up_to(self, layer: int) -> tuple[np.ndarray, np.ndarray]:
        mask = self.labels[:, 0] <= layer
        return self.segments[mask], self.labels[mask]

    def region_index(self, point: np.ndarray) -> int | None:
        """Index of a region containing ``point`` (None outside the box)."""
        for index, region in enumerate(self.regions):
            if region.polygon.contains(point, margin=-GEO_TOL)[0]:
                return index
        return None


def _dedupe(vertices: list[np.ndarray], tol: float) -> np.ndarray:
    kept: list[np.ndarray] = []
    for vertex in vertices:
        if not kept or np.hypot(*(vertex - kept[-1])) > tol:
            kept.append(vertex)
    if len(kept) > 1 and np.hypot(*(kept[0] - kept[-1])) <= tol:
        kept.pop()
    return np.array(kept) if kept else np.zeros((0, 2))


def _split(
    vertices: np.ndarray, coeff: np.ndarray, offset: float, tol: float
) -> tuple[np.ndarray | None, np.ndarray | None, np.ndarray | None]:
    """Cut a convex polygon by ``coeff . x + offset = 0``.

    Returns ``(non_negative_part, negative_part, chord)``; a missing part is
    None, and the chord is None unless both parts exist. Vertices within
    ``tol`` (signed distance) of the line are snapped onto it.
    """
    norm = np.hypot(*coeff)
    distance = (vertices @ coeff + offset) / norm
    positive = distance > tol
    negative = distance < -tol
    if not np.any(negative):
        return vertices, None, None
    if not np.any(positive):
        return None, vertices, None

    on_line = ~(positive | negative)
    vertices = vertices.copy()
    vertices[on_line] -= np.outer(distance[on_line], coeff / norm)
    distance = np.where(on_line, 0.0, distance)

    upper: list[np.ndarray] = []
    lower: list[np.ndarray] = []
    chord: list[np.ndarray] = []
    n = len(vertices)
    for index in range(n):
        p, dp = vertices[index], distance[index]
        q, dq = vertices[(index + 1) % n], distance[(index + 1) % n]
        if dp == 0.0:
            upper.append(p)
            lower.append(p)
            chord.append(p)
        elif dp > 0.0:
            upper.append(p)
        else:
            lower.append(p)
        if dp * dq < 0.0:
            crossing = p + (dp / (dp - dq)) * (q - p)
            upper.append(crossing)
            lower.append(crossing)
            chord.append(crossing)

    upper_poly = _dedupe(upper, tol)
    lower_poly = _dedupe(lower, tol)
    chord_points = np.array(chord)
    if len(chord_points) > 2:
        direction = np.array([-coeff[1], coeff[0]])
        along = chord_points @ direction
        chord_points = chord_points[[int(np.argmin(along)), int(np.argmax(along))]]
    if len(chord_points) < 2 or len(upper_poly) < 3 or len(lower_poly) < 3:
        if np.sum(distance) >= 0:
            return vertices, None, None
        return None, vertices, None
    return upper_poly, lower_poly, chord_points


@dataclass
class _Piece:
    vertices: np.ndarray
    bits: np.ndarray


def _split_segments(
    segments: np.ndarray, vertices: np.ndarray, min_length: float
) -> list[np.ndarray]:
    """Split one chord at every polygon vertex lying on it."""
    p, q = segments[:2], segments[2:]
    direction = q - p
    length2 = float(direction @ direction)
    if length2 == 0.0:
        return []
    rel = vertices - p
    t = rel @ direction / length2
    cross = direction[0] * rel[:, 1] - direction[1] * rel[:, 0]
    perp = np.abs(cross) / np.sqrt(length2)
    on = (perp < ON_SEGMENT_TOL) & (t > 0.0) & (t < 1.0)
    cuts = np.unique(np.concatenate([[0.0], t[on], [1.0]]))
    pieces = []
    for t0, t1 in zip(cuts[:-1], cuts[1:], strict=True):
        if (t1 - t0) * np.sqrt(length2) < min_length:
            continue
        pieces.append(np.concatenate([p + t0 * direction, p + t1 * direction]))
    return pieces


def trace(
    net: NetworkSpec,
    bn: BNState | None,
    upto: int,
    box: Sequence[float] = DEFAULT_BOX,
    region_budget: int = DEFAULT_REGION_BUDGET,
) -> Partition2D:
    """Trace the partition induced by layers 1..upto inside ``box``.

    Args:
        net: Network with 2-D inputs.
        bn: BN parameters (None without BN layers).
        upto: Deepest layer whose units cut the box (0 gives the bare box).
        box: ``(xmin, xmax, ymin, ymax)``.
        region_budget: Maximum number of regions before aborting.

    Raises:
        PartitionError: For non-2-D networks, bad depth or a degenerate box.
        RegionBudgetError: When the region count exceeds the budget.
    """
    bn = check_compatible(net, bn)
    if net.input_dim != 2:
        raise PartitionError(f"Exact tracing needs D_0 = 2, got {net.input_dim}")
    if not 0 <= upto <= net.depth:
        raise PartitionError(f"upto must lie in 0..{net.depth}, got {upto}")
    box = as_box(box)
    scale = max(box[1] - box[0], box[3] - box[2])
    tol = GEO_TOL * max(1.0, scale)
    sliver_area = SLIVER_RTOL * (box[1] - box[0]) * (box[3] - box[2])

    start_affine = identity_affine(net)
    regions: list[tuple[np.ndarray, list[np.ndarray], list[RegionAffine]]] = [
        (box_polygon(box), [], [start_affine])
    ]
    chords: list[np.ndarray] = []
    chord_labels: list[tuple[int, int]] = []
    slivers = 0

    for layer in range(1, upto + 1):
        W = net.weight(layer)
        layer_scale, layer_shift = layer_affine(net, bn, layer)
        next_regions = []
        for vertices, signs, affines in regions:
            affine = affines[-1]
            normals = W @ affine.A
            coeffs = layer_scale[:, None] * normals
            offsets = layer_scale * (W @ affine.b) + layer_shift
            pieces = [_Piece(vertices, np.zeros(W.shape[0], dtype=bool))]
            for unit in range(W.shape[0]):
                split_pieces = []
                for piece in pieces:
                    if np.hypot(*normals[unit]) < NORMAL_EPS:
                        piece.bits[unit] = offsets[unit] >= 0.0
                        split_pieces.append(piece)
                        continue
                    upper, lower, chord = _split(
                        piece.vertices, coeffs[unit], offsets[unit], tol
                    )
                    if chord is not None and min(
                        polygon_area(upper), polygon_area(lower)
                    ) < sliver_area:
                        slivers += 1
                        keep_upper = polygon_area(upper) >= polygon_area(lower)
                        if keep_upper:
                            upper, lower = piece.vertices, None
                        else:
                            upper, lower = None, piece.vertices
                        chord = None
                    if upper is not None:
                        bits = piece.bits.copy()
                        bits[unit] = True
                        split_pieces.append(_Piece(upper, bits))
                    if lower is not None:
                        bits = piece.bits.copy()
                        bits[unit] = False
                        split_pieces.append(_Piece(lower, bits))
                    if chord is not None:
                        chords.append(chord.reshape(-1))
                        chord_labels.append((layer, unit + 1))
                pieces = split_pieces
                if len(next_regions) + len(pieces) > region_budget:
                    raise RegionBudgetError(
                        f"Tracing layer {layer} exceeds the region budget of "
                        f"{region_budget}; use a smaller network or box"
                    )
            for piece in pieces:
                piece_affines = list(affines)
                if layer < net.depth:
                    slopes = np.where(piece.bits, 1.0, net.alpha)
                    piece_affines.append(next_region_affine(net, bn, affine, slopes))
                next_regions.append(
                    (piece.vertices, [*signs, piece.bits], piece_affines)
                )
        regions = next_regions
        logger.debug(
            "Layer %d: %d regions, %d chords", layer, len(regions), len(chords)
        )

    if slivers:
        logger.info("Merged %d sliver(s) below area %g", slivers, sliver_area)

    all_vertices = np.concatenate([vertices for vertices, _, _ in regions])
    segments: list[np.ndarray] = []
    labels: list[tuple[int, int]] = []
    for chord, label in zip(chords, chord_labels, strict=True):
        for piece in _split_segments(chord, all_vertices, tol):
            segments.append(piece)
            labels.append(label)

    built = tuple(
        Region(
            polygon=ConvexPolygon(vertices),
            code=ActivationCode(signs=tuple(signs), alpha=net.alpha),
            affines=tuple(affines),
        )
        for vertices, signs, affines in regions
    )
    return Partition2D(
        box=box,
        depth=upto,
        widths=net.widths,
        regions=built,
        segments=np.array(segments).reshape(-1, 4),
        labels=np.array(labels, dtype=np.int64).reshape(-1, 2),
        slivers_merged=slivers,
    )


def folded_hyperplane(partition: Partition2D, j: int, k: int) -> np.ndarray:
    """Segments of folded hyperplane (j, k) inside the box."""
    return partition.folded_hyperplane(j, k)


def decision_boundary(partition: Partition2D) -> np.ndarray:
    """The folded hyperplane of the scalar output unit.

    Raises:
        PartitionError: For a non-scalar head or a partition not traced to L.
    """
    depth = len(partition.widths) - 1
    if partition.widths[-1] != 1:
        raise PartitionError(
            f"Decision boundary needs a scalar head, got width {partition.widths[-1]}"
        )
    if partition.depth != depth:
        raise PartitionError(
            f"Partition traced to layer {partition.depth}, the head is layer {depth}"
        )
    return partition.folded_hyperplane(depth, 1)


def point_segment_distances(x: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Euclidean distance from point ``x`` to each segment row ``(x1, y1, x2, y2)``."""
    segments = np.atleast_2d(segments)
    p, q = segments[:, :2], segments[:, 2:]
    direction = q - p
    length2 = np.einsum("ij,ij->i", direction, direction)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("ij,ij->i", x - p, direction) / length2
    t = np.clip(np.nan_to_num(t, nan=0.0), 0.0, 1.0)
    nearest = p + t[:, None] * direction
    return np.hypot(*(x - nearest).T)


def sample_segments(segments: np.ndarray, count: int) -> np.ndarray:
    """``count`` points spread uniformly by arc length over a segment set."""
    segments = np.atleast_2d(segments)
    if segments.shape[0] == 0 or count <= 0:
        return np.zeros((0, 2))
    lengths = np.hypot(segments[:, 2] - segments[:, 0], segments[:, 3] - segments[:, 1])
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    total = cumulative[-1]
    if total == 0.0:
        return segments[:, :2][:1].repeat(count, axis=0)
    positions = (np.arange(count) + 0.5) * total / count
    index = np.searchsorted(cumulative, positions, side="right") - 1
    index = np.clip(index, 0, len(lengths) - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (positions - cumulative[index]) / lengths[index]
    t = np.where(lengths[index] > 0, t, 0.0)
    start = segments[index, :2]
    return start + t[:, None] * (segments[index, 2:] - start)


def grid_centers(
    box: Sequence[float], resolution: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell centers of a ``resolution`` x ``resolution`` grid over the box.

    Returns ``(xs, ys, points)`` where ``points`` is row-major with x fastest.
    """
    xmin, xmax, ymin, ymax = as_box(box)
    if resolution < 1:
        raise PartitionError(f"Grid resolution must be >= 1, got {resolution}")
    xs = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
    ys = ymin + (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
    gx, gy = np.meshgrid(xs, ys)
    return xs, ys, np.column_stack([gx.ravel(), gy.ravel()])


def grid_codes(
    net: NetworkSpec,
    bn: BNState | None,
    upto: int,
    box: Sequence[float],
    resolution: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force sign matrix at every grid-cell center.

    Returns ``(points, bits)``; ``bits`` has shape
    (resolution^2, D_1 + ... + D_upto).
    """
    _, _, points = grid_centers(box, resolution)
    return points, code_matrix(net, bn, points, upto)


def unique_codes(bits: np.ndarray) -> np.ndarray:
    """Distinct rows of a boolean code matrix, in first-seen order.

    Rows are packed into 64-bit words before comparing.
    """
    bits = np.asarray(bits, dtype=bool)
    if bits.shape[1] == 0:
        return bits[:1]
    packed = np.packbits(bits, axis=1)
    packed = np.pad(packed, ((0, 0), (0, -packed.shape[1] % 8)))
    words = np.ascontiguousarray(packed).view(np.uint64)
    if words.shape[1] == 1:
        _, first = np.unique(words[:, 0], return_index=True)
    else:
        _, first = np.unique(words, axis=0, return_index=True)
    return bits[np.sort(first)]


@dataclass(frozen=True)
class GridComparison:
    """Agreement between a traced partition and grid-sampled codes."""

    traced_codes: int
    grid_codes: int
    missing_from_trace: int
    mismatched_cells: int
    checked_cells: int

    @property
    def exact(self) -> bool:
        return self.missing_from_trace == 0 and self.mismatched_cells == 0


def compare_with_grid(
    partition: Partition2D,
    net: NetworkSpec,
    bn: BNState | None,
    resolution: int,
    margin: float = 1e-9,
) -> GridComparison:
    """Check every grid code against the traced regions.

    Every code seen on the grid must be a traced code, and every cell center
    lying strictly inside a region (by ``margin``) must carry that region's
    code.
    """
    xs, ys, points = grid_centers(partition.box, resolution)
    bits = code_matrix(net, bn, points, partition.depth)
    traced = {region.code.key for region in partition.regions}
    grid_keys = {
        "".join("1" if b else "0" for b in row) for row in unique_codes(bits)
    }
    flat_traced = {key.replace("|", "") for key in traced}

    mismatched = checked = 0
    for region in partition.regions:
        vertices = region.polygon.vertices
        ix = np.flatnonzero((xs >= vertices[:, 0].min()) & (xs <= vertices[:, 0].max()))
        iy = np.flatnonzero((ys >= vertices[:, 1].min()) & (ys <= vertices[:, 1].max()))
        if ix.size == 0 or iy.size == 0:
            continue
        index = (iy[:, None] * resolution + ix[None, :]).ravel()
        inside = region.polygon.contains(points[index], margin=margin)
        index = index[inside]
        if index.size == 0:
            continue
        if region.code.signs:
            expected = np.concatenate(region.code.signs)
        else:
            expected = np.zeros(0, bool)
        matches = np.all(bits[index] == expected, axis=1)
        checked += int(index.size)
        mismatched += int(np.count_nonzero(~matches))
    return GridComparison(
        traced_codes=len(traced),
        grid_codes=len(grid_keys),
        missing_from_trace=len(grid_keys - flat_traced),
        mismatched_cells=mismatched,
        checked_cells=checked,
    )


def grid_folded_distance(
    net: NetworkSpec,
    bn: BNState | None,
    x: np.ndarray,
    j: int,
    k: int,
    box: Sequence[float],
    resolution: int,
) -> float:
    """Distance from x to the nearest grid cell crossed by the zero set of h_{j,k}.

    Agrees with the exact folded distance to within one cell diagonal.
    Returns ``inf`` when no cell is crossed.
    """
    xmin, xmax, ymin, ymax = as_box(box)
    if net.input_dim != 2:
        raise NetworkError("grid_folded_distance needs 2-D inputs")
    gx = np.linspace(xmin, xmax, resolution + 1)
    gy = np.linspace(ymin, ymax, resolution + 1)
    nodes_x, nodes_y = np.meshgrid(gx, gy)
    nodes = np.column_stack([nodes_x.ravel(), nodes_y.ravel()])
    h = forward(net, bn, nodes, upto=j).pre[-1][:, k - 1]
    h = h.reshape(resolution + 1, resolution + 1)
    corners = np.stack([h[:-1, :-1], h[:-1, 1:], h[1:, :-1], h[1:, 1:]])
    crossed = (corners.min(axis=0) <= 0.0) & (corners.max(axis=0) >= 0.0)
    if not np.any(crossed):
        return float("inf")
    cy, cx = np.nonzero(crossed)
    centers = np.column_stack([(gx[cx] + gx[cx + 1]) / 2, (gy[cy] + gy[cy + 1]) / 2])
    return float(np.min(np.hypot(*(centers - np.asarray(x)).T)))


def write_partition_csv(
    partition: Partition2D, directory: Path, stem: str
) -> tuple[Path, Path]:
    """Write ``<stem>_regions.csv`` and ``<stem>_segments.csv``."""
    regions_path = write_csv(
        Path(directory) / f"{stem}_regions.csv",
        ("id", "vertices", "code"),
        (
            (
                index,
                ";".join(f"{x:.17g} {y:.17g}" for x, y in region.polygon.vertices),
                region.code.key,
            )
            for index, region in enumerate(partition.regions)
        ),
    )
    segments_path = write_csv(
        Path(directory) / f"{stem}_segments.csv",
        ("id", "x1", "y1", "x2", "y2", "layer", "unit"),
        (
            (index, *segment, int(label[0]), int(label[1]))
            for index, (segment, label) in enumerate(
                zip(partition.segments, partition.labels, strict=True)
            )
        ),
    )
    return regions_path, segments_path
