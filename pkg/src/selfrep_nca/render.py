"""PNG rendering of grids, rollouts, lineages and drift heatmaps.

Each grid cell becomes one pixel (``upscale`` repeats pixels for viewing).
Colors are premultiplied, so compositing over white is ``rgb + 1 - alpha``.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import ALIVE_THRESHOLD, ALPHA, Grid
from .io import write_png
from .rule import Trajectory


def to_rgb(cells: np.ndarray) -> np.ndarray:
    """(H, W, 16+) premultiplied state -> (H, W, 3) straight RGB over white."""
    cells = np.asarray(cells, dtype=np.float64)
    alpha = np.clip(cells[..., ALPHA], 0.0, 1.0)
    rgb = np.clip(cells[..., :3], 0.0, 1.0) + (1.0 - alpha)[..., None]
    rgb[cells[..., ALPHA] <= ALIVE_THRESHOLD] = 1.0
    return np.clip(rgb, 0.0, 1.0)


def _frames(source) -> list[np.ndarray]:
    if isinstance(source, Trajectory):
        return [s[0] for s in source.states[1:]]
    if isinstance(source, Grid):
        return [source.cells]
    if isinstance(source, np.ndarray):
        return [source] if source.ndim == 3 else list(source)
    frames = []
    for item in source:
        if isinstance(item, Grid):
            frames.append(item.cells)
        elif hasattr(item, "phenotype"):
            frames.append(item.phenotype.cells)
        else:
            frames.append(np.asarray(item))
    return frames


def render_frames(source, out_dir: str | Path, upscale: int = 1, prefix: str = "frame") -> list[Path]:
    """Write one PNG per frame.

    ``source`` may be a recorded trajectory (one frame per time step after
    the initial state, first batch item), a lineage (one adult per record),
    a grid, or an array of states.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = _frames(source)
    width = max(3, len(str(max(len(frames) - 1, 0))))
    return [write_png(out_dir / f"{prefix}_{i:0{width}d}.png", to_rgb(f), upscale)
            for i, f in enumerate(frames)]


def render_strip(cells: Sequence[np.ndarray], path: str | Path, upscale: int = 1, gap: int = 1) -> Path:
    """Side-by-side snapshots separated by ``gap`` white pixels."""
    tiles = [to_rgb(c) for c in cells]
    if not tiles:
        raise ValueError("nothing to render")
    h = max(t.shape[0] for t in tiles)
    parts = []
    for t in tiles:
        tile = np.ones((h, t.shape[1], 3))
        tile[:t.shape[0]] = t
        parts.extend([tile, np.ones((h, gap, 3))])
    return write_png(path, np.concatenate(parts[:-1], axis=1), upscale)


def render_heatmap(values: np.ndarray, path: str | Path, title: str = "", label: str = "MSE") -> Path:
    """Upper-triangular drift matrix as a heatmap; row i is ancestor i, column j descendant j."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.ma.masked_invalid(np.asarray(values, dtype=np.float64))
    fig, ax = plt.subplots(figsize=(6, 5), dpi=100)
    im = ax.imshow(data, origin="upper", cmap="viridis", interpolation="nearest")
    ax.set_xlabel("generation j")
    ax.set_ylabel("generation i")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label=label)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path
