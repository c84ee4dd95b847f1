"""Ready-made training tasks built from the procedural sprites.

* ``bacteria``: one organism A must become two copies (A -> 2A), the copy
  a few dead columns to the right of the parent.
  Substituted batch slots start from the offspring of a previous output,
  cut out and moved onto the parent's place.
* ``fish``: an egg grows into a fish (growth), then the fish swims left and
  leaves an egg where it started (division).
* ``fish_lizard``: as ``fish`` with two egg species told apart by one hidden
  channel, one growing into a fish and the other into a lizard.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import bacteria_sprite, composite, fish_sprite, lizard_sprite, place, premultiply
from .grid import ALPHA, Boundary, Grid, grid_side_for, new_grid
from .lineage import (EggGeometry, default_dna, extract_first_egg, make_egg_seed,
                      species_dna, transplant)
from .training import TargetSpec


def image_to_grid(image: np.ndarray, boundary: Boundary = Boundary.TORUS, dtype=np.float32) -> Grid:
    """Grid whose RGBA channels hold a premultiplied image, hidden channels zero."""
    grid = new_grid(image.shape[0], image.shape[1], boundary, dtype)
    grid.cells[..., :4] = image
    grid.cells[grid.cells[..., ALPHA] <= 0.1] = 0.0
    return grid


@dataclass
class Task:
    name: str
    targets: list[TargetSpec]
    geometry: EggGeometry | None = None
    founder_dna: list[np.ndarray] | None = None


def membrane_band(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Per body row, the transparent cells between two copies, on both sides around the torus."""
    a, b = first[..., ALPHA] > 0.1, second[..., ALPHA] > 0.1
    clear = (first[..., ALPHA] == 0.0) & (second[..., ALPHA] == 0.0)
    width = a.shape[1]
    band = np.zeros(a.shape, dtype=bool)
    for r in np.flatnonzero(a.any(axis=1) & b.any(axis=1)):
        ca, cb = np.flatnonzero(a[r]), np.flatnonzero(b[r])
        for lo, hi in ((ca.max(), cb.min()), (cb.max(), ca.min() + width)):
            cols = np.arange(lo + 1, hi) % width
            band[r, cols] = clear[r, cols]
    return band


@dataclass(frozen=True)
class MembraneCurriculum:
    """Target with a dark film joining the copies, fading out during training.

    Transparent gaps carry no gradient, so nothing ever learns to grow across
    them. The film starts above the aliveness threshold, which lets growth
    reach the copy, and fades linearly to zero between ``fade_start`` and
    ``fade_end`` so that the final target is the bare image.
    """
    image: np.ndarray
    band: np.ndarray
    alpha: float = 0.15
    fade_start: int = 300
    fade_end: int = 900

    def strength(self, step: int) -> float:
        if step <= self.fade_start:
            return self.alpha
        if step >= self.fade_end:
            return 0.0
        return self.alpha * (self.fade_end - step) / (self.fade_end - self.fade_start)

    def __call__(self, step: int) -> np.ndarray:
        a = self.strength(step)
        if a == 0.0:
            return self.image
        out = self.image.copy()
        out[self.band, 3] = a
        return out


def bacteria_task(sprite_size: int = 24, gap: int = 2, side: int | None = None, membrane_alpha: float = 0.15,
                  fade: tuple[int, int] = (300, 900), offspring: bool = True,
                  boundary: Boundary = Boundary.TORUS) -> Task:
    """A -> 2A with the copy ``gap`` dead columns to the right of the parent's body.

    The default grid is two body widths plus three gaps wide, so the gap
    behind the parent (across the torus seam) is twice the gap ahead of it.
    That asymmetry tells the network which way to grow. ``offspring=False`` feeds
    whole previous outputs back into the batch instead of cut-out offspring.
    """
    sprite = premultiply(bacteria_sprite(sprite_size))
    cols = np.flatnonzero((sprite[..., ALPHA] > 0.1).any(axis=0))
    body = int(cols[-1] - cols[0] + 1)
    spacing = body + gap
    side = 2 * body + 3 * gap if side is None else side
    if 2 * spacing > side or sprite_size > side:
        raise ValueError(f"two copies with gap {gap} do not fit a {side}-cell grid")
    top = (side - sprite_size) // 2
    left = (side - body - spacing) // 2 - int(cols[0])
    one = place(sprite, (side, side), top, left)
    other = place(sprite, (side, side), top, left + spacing)
    two = composite(one, other)
    curriculum = (MembraneCurriculum(two, membrane_band(one, other), membrane_alpha, *fade)
                  if membrane_alpha > 0 else None)
    seed = image_to_grid(one, boundary)
    center = left + (cols[0] + cols[-1]) / 2
    transform = offspring_substitution(seed.cells, spacing, center) if offspring else None
    spec = TargetSpec(seed, two, "replicate", curriculum=curriculum, substitution_transform=transform)
    return Task("bacteria", [spec])


def offspring_substitution(seed: np.ndarray, spacing: int, center: float):
    """Map replication outputs to their offspring alone, moved back onto the parent's place.

    The offspring sits ``spacing`` columns right of the parent, whose body is
    centered on column ``center``. After shifting it back, columns nearer to
    the shifted parent than to ``center`` (on the torus) are cleared, as are
    cells at or below the alive threshold. An output with no live offspring
    falls back to ``seed``.
    """
    width = seed.shape[1]
    j = np.arange(width)

    def dist(c):
        d = np.abs(j - c) % width
        return np.minimum(d, width - d)

    foreign = dist(center) >= dist(center - spacing)

    def transform(outputs: np.ndarray) -> np.ndarray:
        out = np.roll(outputs, -spacing, axis=2)
        out[:, :, foreign] = 0.0
        out[out[..., ALPHA] <= 0.1] = 0.0
        empty = ~(out[..., ALPHA] > 0.1).any(axis=(1, 2))
        out[empty] = seed
        return out

    return transform


def egg_substitution(geometry: EggGeometry):
    """Map division outputs to fresh grids holding their laid eggs (or a default egg)."""
    fallback = default_dna(geometry)

    def transform(outputs: np.ndarray) -> np.ndarray:
        out = np.empty_like(outputs)
        for i, state in enumerate(outputs):
            dna = extract_first_egg(Grid(state, geometry.boundary), geometry)
            out[i] = transplant(fallback if dna is None else dna, geometry, outputs.dtype).cells
        return out

    return transform


def _fish_layout(fish_width: int, multiplier: float):
    side = grid_side_for(fish_width, multiplier)
    egg_side = 3
    egg_row = (side - egg_side) // 2
    egg_col = side - fish_width // 2 - 3 - egg_side // 2
    return side, egg_side, egg_row, egg_col


def _phase_targets(sprite: np.ndarray, side: int, egg_row: int, egg_col: int, egg_side: int,
                   swim: int) -> tuple[np.ndarray, np.ndarray]:
    sh, sw = sprite.shape[:2]
    top = egg_row + egg_side // 2 - sh // 2
    left = egg_col + egg_side // 2 - sw // 2
    adult = place(sprite, (side, side), top, left)
    moved = place(sprite, (side, side), top, left - swim)
    egg = np.zeros((side, side, 4))
    egg[egg_row:egg_row + egg_side, egg_col:egg_col + egg_side, 3] = 1.0
    return adult, composite(moved, egg)


def fish_task(fish_width: int = 16, multiplier: float = 2.25, egg_feedback: bool = True,
              boundary: Boundary = Boundary.TORUS) -> Task:
    """Growth (egg -> fish) and division (fish -> fish swum left + egg)."""
    side, egg_side, egg_row, egg_col = _fish_layout(fish_width, multiplier)
    geometry = EggGeometry((side, side), (egg_row, egg_col), side=egg_side, boundary=boundary)
    sprite = premultiply(fish_sprite(fish_width))
    swim = fish_width // 2 + egg_side + 1
    adult, divided = _phase_targets(sprite, side, egg_row, egg_col, egg_side, swim)
    growth = TargetSpec(make_egg_seed(geometry), adult, "growth",
                        substitution_source=1 if egg_feedback else None,
                        substitution_transform=egg_substitution(geometry) if egg_feedback else None)
    division = TargetSpec(image_to_grid(adult, boundary), divided, "division", initial_source=0)
    return Task("fish", [growth, division], geometry, [default_dna(geometry)])


def fish_lizard_task(width: int = 16, multiplier: float = 2.25, channel: int = 4,
                     boundary: Boundary = Boundary.TORUS) -> Task:
    """Two species: +1 in ``channel`` grows a fish, -1 grows a lizard."""
    side, egg_side, egg_row, egg_col = _fish_layout(width, multiplier)
    geometry = EggGeometry((side, side), (egg_row, egg_col), side=egg_side, boundary=boundary)
    swim = width // 2 + egg_side + 1
    targets, founders = [], []
    for k, (sprite, sign, label) in enumerate(((fish_sprite(width), 1.0, "fish"),
                                               (lizard_sprite(width), -1.0, "lizard"))):
        adult, divided = _phase_targets(premultiply(sprite), side, egg_row, egg_col, egg_side, swim)
        dna = species_dna(geometry, sign, channel)
        founders.append(dna)
        growth_index = 2 * k
        targets.append(TargetSpec(make_egg_seed(geometry, dna), adult, f"{label}-growth",
                                  substitution_source=growth_index + 1,
                                  substitution_transform=egg_substitution(geometry)))
        targets.append(TargetSpec(image_to_grid(adult, boundary), divided, f"{label}-division",
                                  initial_source=growth_index))
    return Task("fish_lizard", targets, geometry, founders)


TASKS = {"bacteria": bacteria_task, "fish": fish_task, "fish_lizard": fish_lizard_task}


def build_task(name: str, **kwargs) -> Task:
    try:
        factory = TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; choose from {sorted(TASKS)}") from None
    return factory(**kwargs)
