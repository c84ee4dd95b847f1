"""Cell lattice, aliveness semantics and neighborhood extraction.

A grid is stored as a ``(H, W, 16)`` array. Channels 0-3 are RGBA and
channels 4-15 are hidden state. Batched internals work on ``(B, H, W, 16)``
arrays; the :class:`Grid` wrapper carries the boundary mode alongside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidArgument

N_CHANNELS = 16
ALPHA = 3
ALIVE_THRESHOLD = 0.1
NBHD_SIZE = 9 * N_CHANNELS
GRID_SIZE_MULTIPLIER = 2.25


class Boundary(str, Enum):
    TORUS = "torus"
    ZERO = "zero"


class AliveRule(str, Enum):
    """Which cells count as alive when dead cells are reset.

    NEIGHBORHOOD: a cell lives while any cell of its 3x3 neighborhood has
    alpha > 0.1, checked before and after the update. CELL: a cell lives
    only while its own alpha > 0.1.
    """
    NEIGHBORHOOD = "neighborhood"
    CELL = "cell"


@dataclass
class Grid:
    cells: np.ndarray
    boundary: Boundary = Boundary.TORUS

    def __post_init__(self):
        self.boundary = Boundary(self.boundary)
        if self.cells.ndim != 3 or self.cells.shape[2] != N_CHANNELS:
            raise InvalidArgument(f"cells must have shape (H, W, {N_CHANNELS}), got {self.cells.shape}")
        if self.cells.shape[0] < 1 or self.cells.shape[1] < 1:
            raise InvalidArgument("grid dimensions must be >= 1")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape[:2]

    @property
    def alpha(self) -> np.ndarray:
        return self.cells[..., ALPHA]

    def copy(self) -> "Grid":
        return Grid(self.cells.copy(), self.boundary)

    def replace(self, cells: np.ndarray) -> "Grid":
        return Grid(cells, self.boundary)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.boundary == other.boundary and np.array_equal(self.cells, other.cells)


def grid_side_for(target_side: int, multiplier: float = GRID_SIZE_MULTIPLIER) -> int:
    """Grid side that holds a bit more than two copies of a pattern."""
    if target_side < 1:
        raise InvalidArgument("target side must be >= 1")
    return math.ceil(multiplier * target_side)


def new_grid(height: int, width: int, boundary: Boundary | str = Boundary.TORUS,
             dtype=np.float32) -> Grid:
    """Return an all-dead grid."""
    if height < 1 or width < 1:
        raise InvalidArgument(f"grid dimensions must be >= 1, got {height}x{width}")
    return Grid(np.zeros((height, width, N_CHANNELS), dtype=dtype), Boundary(boundary))


def pad(states: np.ndarray, boundary: Boundary) -> np.ndarray:
    """Pad the two spatial axes (-3, -2) by one cell."""
    widths = [(0, 0)] * (states.ndim - 3) + [(1, 1), (1, 1), (0, 0)]
    mode = "wrap" if boundary == Boundary.TORUS else "constant"
    return np.pad(states, widths, mode=mode)


def max_pool3(values: np.ndarray, boundary: Boundary) -> np.ndarray:
    """3x3 maximum filter over the last two axes of ``values``."""
    widths = [(0, 0)] * (values.ndim - 2) + [(1, 1), (1, 1)]
    if boundary == Boundary.TORUS:
        p = np.pad(values, widths, mode="wrap")
    else:
        p = np.pad(values, widths, mode="constant", constant_values=-np.inf)
    h, w = values.shape[-2:]
    rows = np.maximum(np.maximum(p[..., :-2, :], p[..., 1:-1, :]), p[..., 2:, :])
    return np.maximum(np.maximum(rows[..., :w], rows[..., 1:w + 1]), rows[..., 2:])


def updatable(states: np.ndarray, boundary: Boundary) -> np.ndarray:
    """Cells whose 3x3 neighborhood holds at least one alive cell."""
    return max_pool3(states[..., ALPHA], boundary) > ALIVE_THRESHOLD


def alive(states: np.ndarray) -> np.ndarray:
    return states[..., ALPHA] > ALIVE_THRESHOLD


def living(states: np.ndarray, boundary: Boundary, rule: AliveRule = AliveRule.NEIGHBORHOOD) -> np.ndarray:
    """Cells that count as alive in a single state under ``rule``."""
    if AliveRule(rule) == AliveRule.CELL:
        return alive(states)
    return updatable(states, boundary)


def survivors(live_before: np.ndarray, after: np.ndarray, boundary: Boundary,
              rule: AliveRule = AliveRule.NEIGHBORHOOD) -> np.ndarray:
    """Cells kept after an update; ``live_before`` is the pre-step updatable mask."""
    if AliveRule(rule) == AliveRule.CELL:
        return alive(after)
    return live_before & updatable(after, boundary)


def reset_dead_states(states: np.ndarray, boundary: Boundary = Boundary.TORUS,
                      rule: AliveRule = AliveRule.NEIGHBORHOOD) -> np.ndarray:
    out = states.copy()
    out[~living(states, boundary, rule)] = 0.0
    return out


def updatable_mask(grid: Grid) -> np.ndarray:
    """Boolean ``(H, W)`` mask of cells eligible for an update this step."""
    return updatable(grid.cells, grid.boundary)


def reset_dead(grid: Grid, rule: AliveRule = AliveRule.CELL) -> Grid:
    """Zero all 16 channels of every dead cell.

    By default a cell is dead when its own alpha is at most 0.1. With
    ``AliveRule.NEIGHBORHOOD`` it is dead only when no cell of its 3x3
    neighborhood has alpha above 0.1, which is the reset a step applies
    under that rule.
    """
    return grid.replace(reset_dead_states(grid.cells, grid.boundary, rule))


def neighborhood(grid: Grid, x: int, y: int) -> np.ndarray:
    """Row-major 3x3 window of cell states centered on row ``x``, column ``y``.

    Returns a ``(9, 16)`` array; ``.ravel()`` gives the 144 network inputs.
    """
    h, w = grid.shape
    if not (0 <= x < h and 0 <= y < w):
        raise InvalidArgument(f"cell ({x}, {y}) outside {h}x{w} grid")
    out = np.zeros((9, N_CHANNELS), dtype=grid.cells.dtype)
    k = 0
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            i, j = x + dx, y + dy
            if grid.boundary == Boundary.TORUS:
                out[k] = grid.cells[i % h, j % w]
            elif 0 <= i < h and 0 <= j < w:
                out[k] = grid.cells[i, j]
            k += 1
    return out


@dataclass
class NeighborIndex:
    """Flat gather table for the 9-cell windows of an ``H x W`` lattice.

    ``table[c, k]`` is the flat index of the k-th window entry of cell ``c``.
    Index ``H * W`` denotes a padding cell that always reads as zero.
    """
    height: int
    width: int
    boundary: Boundary
    table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h, w = self.height, self.width
        rows, cols = np.divmod(np.arange(h * w), w)
        entries = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                i, j = rows + dx, cols + dy
                if self.boundary == Boundary.TORUS:
                    entries.append((i % h) * w + (j % w))
                else:
                    inside = (i >= 0) & (i < h) & (j >= 0) & (j < w)
                    entries.append(np.where(inside, i * w + j, h * w))
        self.table = np.stack(entries, axis=1)


_INDEX_CACHE: dict[tuple[int, int, Boundary], NeighborIndex] = {}


def neighbor_index(height: int, width: int, boundary: Boundary) -> NeighborIndex:
    key = (height, width, Boundary(boundary))
    if key not in _INDEX_CACHE:
        _INDEX_CACHE[key] = NeighborIndex(height, width, Boundary(boundary))
    return _INDEX_CACHE[key]


def shift(grid: Grid, dx: int, dy: int) -> Grid:
    """Cyclically translate a grid so that cell (x, y) moves to (x+dx, y+dy)."""
    return grid.replace(np.roll(grid.cells, (dx, dy), axis=(0, 1)))
