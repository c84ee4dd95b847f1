"""Multi-generation egg -> adult -> egg simulation.

Each generation transplants its DNA (the full state of an egg) onto a blank
grid, grows it for ``growth_steps``, records the adult, runs the division
phase for ``division_steps`` and reads the first laid egg, which founds the
next generation. There is no selection: the first egg is always taken.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .components import components
from .errors import InvalidArgument
from .grid import ALPHA, ALIVE_THRESHOLD, N_CHANNELS, Boundary, Grid, alive, new_grid
from .rng import RngStream
from .rule import UpdateMode, UpdateNetwork, rollout_states


@dataclass(frozen=True)
class EggGeometry:
    """Egg placement; positions are top-left corners as (row, col)."""
    grid_shape: tuple[int, int]
    canonical: tuple[int, int]
    expected: tuple[int, int] | None = None
    side: int = 3
    boundary: Boundary = Boundary.TORUS

    def __post_init__(self):
        if self.side < 1:
            raise InvalidArgument("egg side must be >= 1")
        h, w = self.grid_shape
        for pos in (self.canonical, self.expected_position):
            r, c = pos
            if not (0 <= r and r + self.side <= h and 0 <= c and c + self.side <= w):
                raise InvalidArgument(f"egg region at {pos} does not fit a {h}x{w} grid")

    @property
    def expected_position(self) -> tuple[int, int]:
        return self.expected if self.expected is not None else self.canonical

    @property
    def dna_length(self) -> int:
        return N_CHANNELS * self.side * self.side

    def region(self, pos: tuple[int, int]) -> tuple[slice, slice]:
        r, c = pos
        return slice(r, r + self.side), slice(c, c + self.side)


# DNA layout: channel-major, then row-major cells, i.e. (16, side, side).ravel()

def cells_to_dna(block: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(block.transpose(2, 0, 1)).ravel()


def dna_to_cells(dna: np.ndarray, side: int) -> np.ndarray:
    return dna.reshape(N_CHANNELS, side, side).transpose(1, 2, 0)


def default_dna(geometry: EggGeometry, dtype=np.float32) -> np.ndarray:
    """Black (RGB 0), opaque, hidden channels 0."""
    block = np.zeros((geometry.side, geometry.side, N_CHANNELS), dtype)
    block[..., ALPHA] = 1.0
    return cells_to_dna(block)


def species_dna(geometry: EggGeometry, sign: float, channel: int = 4, dtype=np.float32) -> np.ndarray:
    """Default egg carrying ``sign`` (+1 or -1) in one hidden channel."""
    if not 4 <= channel < N_CHANNELS:
        raise InvalidArgument("species marker must live in a hidden channel (4-15)")
    block = dna_to_cells(default_dna(geometry, dtype), geometry.side).copy()
    block[..., channel] = sign
    return cells_to_dna(block)


def random_payload_dna(geometry: EggGeometry, seed: int, scale: float = 0.5, dtype=np.float32) -> np.ndarray:
    """Default egg with a fixed random vector in the hidden channels."""
    block = dna_to_cells(default_dna(geometry, dtype), geometry.side).copy()
    block[..., 4:] = RngStream(seed).uniform(-scale, scale, block[..., 4:].shape)
    return cells_to_dna(block)


def make_egg_seed(geometry: EggGeometry, dna: np.ndarray | None = None, dtype=np.float32) -> Grid:
    """Blank grid with one egg written at the canonical position."""
    if dna is None:
        dna = default_dna(geometry, dtype)
    dna = np.asarray(dna)
    if dna.size != geometry.dna_length:
        raise InvalidArgument(f"DNA has {dna.size} values, egg of side {geometry.side} needs {geometry.dna_length}")
    grid = new_grid(*geometry.grid_shape, geometry.boundary, dtype=dtype)
    grid.cells[geometry.region(geometry.canonical)] = dna_to_cells(dna, geometry.side)
    return grid


def transplant(dna: np.ndarray, geometry: EggGeometry, dtype=np.float32) -> Grid:
    return make_egg_seed(geometry, dna, dtype)


def make_seed_cloud(positions: list[tuple[int, int]], geometry: EggGeometry,
                    dna: np.ndarray | None = None, dtype=np.float32) -> Grid:
    """One grid holding identical eggs at each top-left position."""
    if not positions:
        raise InvalidArgument("at least one seed position is required")
    dna = default_dna(geometry, dtype) if dna is None else np.asarray(dna)
    if dna.size != geometry.dna_length:
        raise InvalidArgument("DNA length does not match egg geometry")
    h, w = geometry.grid_shape
    s = geometry.side
    block = dna_to_cells(dna, s)
    grid = new_grid(h, w, geometry.boundary, dtype=dtype)
    taken = np.zeros((h, w), bool)
    for r, c in positions:
        if not (0 <= r < h and 0 <= c < w):
            raise InvalidArgument(f"seed position {(r, c)} outside the grid")
        rows = np.arange(r, r + s) % h
        cols = np.arange(c, c + s) % w
        if taken[np.ix_(rows, cols)].any():
            raise InvalidArgument(f"seed at {(r, c)} overlaps another seed")
        taken[np.ix_(rows, cols)] = True
        grid.cells[np.ix_(rows, cols)] = block
    return grid


def read_region(grid: Grid, pos: tuple[int, int], side: int) -> np.ndarray:
    h, w = grid.shape
    rows = np.arange(pos[0], pos[0] + side) % h
    cols = np.arange(pos[1], pos[1] + side) % w
    return grid.cells[np.ix_(rows, cols)]


def extract_first_egg(grid: Grid, geometry: EggGeometry, max_size_slack: int = 2) -> np.ndarray | None:
    """DNA of the first egg in a post-division grid, or None if there is none.

    The region at the expected laying position is used when its mean alpha
    exceeds the aliveness threshold. Otherwise the alive components are
    searched for the one whose bounding box best matches the egg (each side
    at most ``side + max_size_slack``), ties going to the first component in
    row-major scan order.
    """
    s = geometry.side
    block = read_region(grid, geometry.expected_position, s)
    if block[..., ALPHA].mean() > ALIVE_THRESHOLD:
        return cells_to_dna(block)
    best, best_score = None, None
    for comp in components(alive(grid.cells), grid.boundary == Boundary.TORUS):
        top, left, bh, bw = comp.bbox(grid.shape, grid.boundary == Boundary.TORUS)
        if bh > s + max_size_slack or bw > s + max_size_slack:
            continue
        score = abs(bh - s) + abs(bw - s)
        if best_score is None or score < best_score:
            best, best_score = (top + (bh - s) // 2, left + (bw - s) // 2), score
    if best is None:
        return None
    block = read_region(grid, best, s)
    if block[..., ALPHA].mean() <= ALIVE_THRESHOLD:
        return None
    return cells_to_dna(block)


def isolate_offspring(grid: Grid, rng: RngStream, margin: int = 1, min_size: int = 4) -> np.ndarray | None:
    """Crop one replicated pattern (seeded random choice) with a margin.

    Returns the ``(h, w, 16)`` crop, or None if nothing is alive.
    """
    torus = grid.boundary == Boundary.TORUS
    comps = [c for c in components(alive(grid.cells), torus) if c.size >= min_size]
    if not comps:
        return None
    comp = comps[int(rng.integers(len(comps)))]
    top, left, bh, bw = comp.bbox(grid.shape, torus)
    h, w = grid.shape
    rows = np.arange(top - margin, top + bh + margin) % h
    cols = np.arange(left - margin, left + bw + margin) % w
    keep = np.zeros(grid.shape, bool)
    keep[comp.cells[:, 0], comp.cells[:, 1]] = True
    crop = (grid.cells * keep[..., None])[np.ix_(rows, cols)]
    return crop


def transplant_pattern(crop: np.ndarray, grid_shape: tuple[int, int], center: tuple[int, int],
                       boundary: Boundary = Boundary.TORUS) -> Grid:
    """Write a cropped pattern onto a blank grid, centered on ``center``."""
    grid = new_grid(*grid_shape, boundary, dtype=crop.dtype)
    ch, cw = crop.shape[:2]
    rows = np.arange(center[0] - ch // 2, center[0] - ch // 2 + ch) % grid_shape[0]
    cols = np.arange(center[1] - cw // 2, center[1] - cw // 2 + cw) % grid_shape[1]
    grid.cells[np.ix_(rows, cols)] = crop
    return grid


# ---------------------------------------------------------------- generations

@dataclass
class LineageRecord:
    generation: int
    dna: np.ndarray
    phenotype: Grid
    viable: bool = True
    divided: Grid | None = field(default=None, repr=False)


@dataclass
class GenerationResult:
    adult: Grid
    next_dna: np.ndarray | None
    divided: Grid = field(repr=False, default=None)

    @property
    def extinct(self) -> bool:
        return self.next_dna is None


def has_parent(grid: Grid, geometry: EggGeometry, margin: int = 1) -> bool:
    """True when something alive remains away from the expected egg region.

    An egg sitting alone where it was planted means the organism never grew
    and divided, which counts as extinction.
    """
    live = alive(grid.cells).copy()
    r, c = geometry.expected_position
    s = geometry.side
    h, w = grid.shape
    rows = np.arange(r - margin, r + s + margin) % h
    cols = np.arange(c - margin, c + s + margin) % w
    live[np.ix_(rows, cols)] = False
    return bool(live.any())


def run_generation(net: UpdateNetwork, dna: np.ndarray, geometry: EggGeometry, growth_steps: int = 96,
                   division_steps: int = 96, mode: UpdateMode | None = None,
                   rng: RngStream | None = None) -> GenerationResult:
    mode = mode or UpdateMode()
    rng = rng if rng is not None else RngStream(0)
    seed = transplant(dna, geometry, dtype=net.dtype)
    adult, _ = rollout_states(seed.cells[None], net, growth_steps, mode, rng, geometry.boundary)
    divided, _ = rollout_states(adult, net, division_steps, mode, rng, geometry.boundary)
    adult_grid = Grid(adult[0], geometry.boundary)
    divided_grid = Grid(divided[0], geometry.boundary)
    egg = extract_first_egg(divided_grid, geometry) if has_parent(divided_grid, geometry) else None
    return GenerationResult(adult_grid, egg, divided_grid)


def run_lineage(net: UpdateNetwork, dna0: np.ndarray, geometry: EggGeometry, n_generations: int = 100,
                growth_steps: int = 96, division_steps: int = 96, mode: UpdateMode | None = None,
                rng: RngStream | None = None, keep_divided: bool = False) -> list[LineageRecord]:
    """Founder plus up to ``n_generations`` descendants, always the first egg.

    A generation whose division yields no egg is recorded with
    ``viable=False`` and ends the lineage. The last generation is grown but
    not divided, so a complete lineage has exactly ``n_generations + 1``
    records.
    """
    if n_generations < 0:
        raise InvalidArgument("n_generations must be >= 0")
    rng = rng if rng is not None else RngStream(0)
    records: list[LineageRecord] = []
    dna = np.asarray(dna0, dtype=net.dtype)
    for g in range(n_generations + 1):
        last = g == n_generations
        result = run_generation(net, dna, geometry, growth_steps, 0 if last else division_steps, mode, rng)
        if last:
            records.append(LineageRecord(g, dna, result.adult))
            break
        record = LineageRecord(g, dna, result.adult, viable=not result.extinct,
                               divided=result.divided if keep_divided else None)
        records.append(record)
        if result.extinct:
            break
        dna = result.next_dna
    return records
