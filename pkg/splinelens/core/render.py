"""Deterministic SVG rendering of partitions, heat maps and boundary overlays.

Figures are built with the object API (no pyplot state), so rendering is safe
from worker threads. A fixed ``svg.hashsalt`` and an empty date make the
output byte-identical across runs.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from matplotlib.lines import Line2D
from matplotlib.patches import Polygon, Rectangle

from .partition import Partition2D

logger = logging.getLogger(__name__)

SVG_RC = {
    "svg.hashsalt": "splinelens",
    "svg.fonttype": "none",
    "path.simplify": False,
}
SVG_METADATA = {"Date": None, "Creator": "splinelens"}

CURRENT_LAYER_COLOR = "#1f5fbf"
EARLIER_LAYER_COLOR = "#9a9a9a"
CLASS_COLORS = ("#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
REGION_CMAP = "tab20"


def _new_axes(box: Sequence[float], size: float = 6.0):
    figure = Figure(figsize=(size, size))
    FigureCanvasSVG(figure)
    axes = figure.add_axes((0.06, 0.06, 0.88, 0.88))
    xmin, xmax, ymin, ymax = box
    axes.set_xlim(xmin, xmax)
    axes.set_ylim(ymin, ymax)
    axes.set_aspect("equal")
    axes.add_patch(
        Rectangle(
            (xmin, ymin),
            xmax - xmin,
            ymax - ymin,
            fill=False,
            edgecolor="black",
            linewidth=1.0,
            gid="box",
        )
    )
    return figure, axes


def _save(figure: Figure, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with mpl.rc_context(SVG_RC):
        figure.savefig(path, format="svg", metadata=SVG_METADATA)
    logger.debug("Wrote %s", path)
    return path


def _scatter(axes, points: np.ndarray | None, labels: np.ndarray | None) -> None:
    if points is None or len(points) == 0:
        return
    points = np.asarray(points)
    if labels is None:
        colors = "black"
    else:
        colors = [CLASS_COLORS[int(label) % len(CLASS_COLORS)] for label in labels]
    axes.scatter(points[:, 0], points[:, 1], s=9, c=colors, zorder=4, gid="points")


def _quality_colors(quality: Sequence[float]) -> list:
    """Darker blue for better-fitting (lower TLS loss) hyperplanes."""
    quality = np.asarray(quality, dtype=np.float64)
    spread = np.ptp(quality)
    if spread == 0.0:
        rank = np.zeros_like(quality)
    else:
        rank = (quality - quality.min()) / spread
    cmap = mpl.colormaps["Blues"]
    return [cmap(1.0 - 0.6 * value) for value in rank]


def partition_svg(
    partition: Partition2D,
    path: Path,
    points: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    current_layer: int | None = None,
    hyperplane_quality: Sequence[float] | None = None,
    title: str | None = None,
) -> Path:
    """Render a traced partition.

    Regions are filled polygons (``region-<i>``), boundary pieces are lines
    (``segment-<i>``). Segments of ``current_layer`` (default: the traced
    depth) are blue, earlier ones gray. For layer 1, ``hyperplane_quality``
    (one TLS loss per unit) shades each unit's line. A partition with a single
    region shows the box only.
    """
    current_layer = partition.depth if current_layer is None else current_layer
    figure, axes = _new_axes(partition.box)
    if len(partition.regions) > 1:
        cmap = mpl.colormaps[REGION_CMAP]
        for index, region in enumerate(partition.regions):
            axes.add_patch(
                Polygon(
                    region.polygon.vertices,
                    closed=True,
                    facecolor=cmap(index % cmap.N),
                    edgecolor="none",
                    alpha=0.35,
                    gid=f"region-{index}",
                )
            )

    unit_colors = None
    if hyperplane_quality is not None and current_layer == 1:
        unit_colors = _quality_colors(hyperplane_quality)
    for index, (segment, (layer, unit)) in enumerate(
        zip(partition.segments, partition.labels, strict=True)
    ):
        if layer == current_layer:
            color = unit_colors[unit - 1] if unit_colors else CURRENT_LAYER_COLOR
            width = 1.6
        else:
            color, width = EARLIER_LAYER_COLOR, 0.8
        axes.add_line(
            Line2D(
                [segment[0], segment[2]],
                [segment[1], segment[3]],
                color=color,
                linewidth=width,
                gid=f"segment-{index}",
            )
        )
    _scatter(axes, points, labels)
    if title:
        axes.set_title(title)
    return _save(figure, path)


def heatmap_svg(
    values: np.ndarray,
    box: Sequence[float],
    path: Path,
    points: np.ndarray | None = None,
    title: str | None = None,
) -> Path:
    """Grayscale heat map of a (rows, cols) array over the box; row 0 is the bottom."""
    figure, axes = _new_axes(box)
    xmin, xmax, ymin, ymax = box
    axes.imshow(
        values,
        cmap="gray_r",
        origin="lower",
        extent=(xmin, xmax, ymin, ymax),
        vmin=0.0,
        vmax=1.0,
        interpolation="nearest",
        gid="heatmap",
    )
    _scatter(axes, points, None)
    if title:
        axes.set_title(title)
    return _save(figure, path)


def boundary_overlay_svg(
    boundaries: Sequence[np.ndarray],
    box: Sequence[float],
    path: Path,
    points: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    title: str | None = None,
) -> Path:
    """Overlay decision-boundary realizations (``boundary-<i>`` groups)."""
    figure, axes = _new_axes(box)
    alpha = 1.0 if len(boundaries) <= 1 else max(0.15, 1.0 / np.sqrt(len(boundaries)))
    for index, segments in enumerate(boundaries):
        segments = np.asarray(segments).reshape(-1, 4)
        xs = np.column_stack(
            [segments[:, 0], segments[:, 2], np.full(len(segments), np.nan)]
        )
        ys = np.column_stack(
            [segments[:, 1], segments[:, 3], np.full(len(segments), np.nan)]
        )
        axes.add_line(
            Line2D(
                xs.ravel(),
                ys.ravel(),
                color=CURRENT_LAYER_COLOR,
                linewidth=1.0,
                alpha=alpha,
                gid=f"boundary-{index}",
            )
        )
    _scatter(axes, points, labels)
    if title:
        axes.set_title(title)
    return _save(figure, path)
