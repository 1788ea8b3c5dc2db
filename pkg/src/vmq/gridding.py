"""Per-class g x g occupancy grids.

Cell (i, j) is row i (from the top) and column j. It covers
x in [j/g, (j+1)/g) and y in [i/g, (i+1)/g); the last row and column are
closed at 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BBox, FrameAnnotation, _n_classes
from .exceptions import GridMismatchError, ParameterError

DEFAULT_GRID_SIZE = 56
DEFAULT_THRESHOLD = 0.2
RASTER_MODES = ("all_cells", "center_cell")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Boolean occupancy of shape (n_classes, g, g)."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.ndim == 2:
            cells = cells[None]
        if cells.ndim != 3 or cells.shape[1] != cells.shape[2] or cells.shape[1] < 1:
            raise ParameterError(f"grid cells must have shape (n, g, g), got {cells.shape}")
        object.__setattr__(self, "cells", _frozen(cells))

    @property
    def g(self) -> int:
        return self.cells.shape[1]

    @property
    def n_classes(self) -> int:
        return self.cells.shape[0]

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.cells.shape == other.cells.shape and bool(np.array_equal(self.cells, other.cells))

    def __hash__(self):
        return hash((self.cells.shape, self.cells.tobytes()))

    def for_class(self, class_id: int) -> np.ndarray:
        return self.cells[class_id]

    def true_cells(self, class_id: int) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.cells[class_id])
        return list(zip(rows.tolist(), cols.tolist()))

    def any(self, class_id: int) -> bool:
        return bool(self.cells[class_id].any())

    @classmethod
    def empty(cls, n_classes: int, g: int) -> "OccupancyGrid":
        return cls(np.zeros((n_classes, g, g), dtype=bool))


@dataclass(frozen=True, eq=False)
class ActivationMap:
    """Real-valued per-class activation of shape (n_classes, g, g)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3 or values.shape[1] != values.shape[2] or values.shape[1] < 1:
            raise ParameterError(f"activation values must have shape (n, g, g), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("activation values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def g(self) -> int:
        return self.values.shape[1]


def cell_edges(g: int) -> np.ndarray:
    return np.arange(g + 1, dtype=float) / g


def box_cell_ranges(box: BBox, g: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean row and column masks of the cells a box meets with positive area."""
    edges = cell_edges(g)
    cols = (edges[:-1] < box.x_max) & (edges[1:] > box.x_min)
    rows = (edges[:-1] < box.y_max) & (edges[1:] > box.y_min)
    return rows, cols


def _point_index(v: float, g: int) -> int:
    return min(int(np.searchsorted(cell_edges(g), v, side="right")) - 1, g - 1)


def box_center_cell(box: BBox, g: int) -> tuple[int, int]:
    """Cell containing the box centroid, clipped to the box's own cell range."""
    rows, cols = box_cell_ranges(box, g)
    cx, cy = box.center
    r_idx, c_idx = np.flatnonzero(rows), np.flatnonzero(cols)
    i = min(max(_point_index(cy, g), r_idx[0]), r_idx[-1])
    j = min(max(_point_index(cx, g), c_idx[0]), c_idx[-1])
    return int(i), int(j)


def box_mask(box: BBox, g: int) -> np.ndarray:
    rows, cols = box_cell_ranges(box, g)
    return np.outer(rows, cols)


def rasterize(frame: FrameAnnotation, classes, g: int = DEFAULT_GRID_SIZE,
              mode: str = "all_cells") -> OccupancyGrid:
    """Down-scale a frame's boxes onto a per-class g x g grid."""
    if g < 1:
        raise ParameterError(f"grid size must be >= 1, got {g}")
    if mode not in RASTER_MODES:
        raise ParameterError(f"unknown rasterize mode {mode!r}")
    cells = np.zeros((_n_classes(classes), g, g), dtype=bool)
    for obj in frame.objects:
        if mode == "all_cells":
            rows, cols = box_cell_ranges(obj.bbox, g)
            cells[obj.class_id][np.ix_(rows, cols)] = True
        else:
            i, j = box_center_cell(obj.bbox, g)
            cells[obj.class_id, i, j] = True
    return OccupancyGrid(cells)


def threshold_activation(m: ActivationMap, tau: float = DEFAULT_THRESHOLD) -> OccupancyGrid:
    if not np.isfinite(tau):
        raise ParameterError(f"threshold must be finite, got {tau!r}")
    return OccupancyGrid(m.values >= tau)


def manhattan_offsets(radius: int, exact: bool = False) -> list[tuple[int, int]]:
    """Offsets (di, dj) with |di| + |dj| <= radius (or == radius when ``exact``)."""
    out = []
    for di in range(-radius, radius + 1):
        for dj in range(-radius, radius + 1):
            d = abs(di) + abs(dj)
            if (d == radius) if exact else (d <= radius):
                out.append((di, dj))
    return out


def _shift_or(acc: np.ndarray, src: np.ndarray, di: int, dj: int) -> None:
    g = src.shape[-1]
    rs, rd = (slice(0, g - di), slice(di, g)) if di >= 0 else (slice(-di, g), slice(0, g + di))
    cs, cd = (slice(0, g - dj), slice(dj, g)) if dj >= 0 else (slice(-dj, g), slice(0, g + dj))
    acc[..., rd, cd] |= src[..., rs, cs]


def dilate(grid: OccupancyGrid, radius: int) -> OccupancyGrid:
    """Grow every true cell to its Manhattan ball of the given radius (0, 1 or 2)."""
    if radius not in (0, 1, 2):
        raise ParameterError(f"dilation radius must be 0, 1 or 2, got {radius!r}")
    if radius == 0:
        return grid
    out = grid.cells.copy()
    for di, dj in manhattan_offsets(radius):
        if di or dj:
            _shift_or(out, grid.cells, di, dj)
    return OccupancyGrid(out)


def region_cell_mask(rect: BBox, g: int, closed: bool = False) -> np.ndarray:
    """Cells meeting ``rect``; with ``closed`` a shared edge or corner also counts."""
    if not closed:
        return box_mask(rect, g)
    edges = cell_edges(g)
    cols = (edges[:-1] <= rect.x_max) & (edges[1:] >= rect.x_min)
    rows = (edges[:-1] <= rect.y_max) & (edges[1:] >= rect.y_min)
    return np.outer(rows, cols)


def check_same_g(*grids) -> int:
    gs = {gr.shape[-1] if isinstance(gr, np.ndarray) else gr.g for gr in grids}
    if len(gs) != 1:
        raise GridMismatchError(f"grid sizes differ: {sorted(gs)}")
    return gs.pop()
