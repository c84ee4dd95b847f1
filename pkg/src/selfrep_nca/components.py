"""Connected components of alive cells, aware of torus wraparound."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_EIGHT = np.ones((3, 3), bool)


@dataclass
class Component:
    label: int
    cells: np.ndarray  # (n, 2) row/col coordinates
    first: tuple[int, int]  # first cell in row-major scan order

    @property
    def size(self) -> int:
        return len(self.cells)

    def bbox(self, shape: tuple[int, int], torus: bool = True) -> tuple[int, int, int, int]:
        """``(top, left, height, width)``; on a torus the box may wrap past the edge."""
        top, height = _extent(self.cells[:, 0], shape[0], torus)
        left, width = _extent(self.cells[:, 1], shape[1], torus)
        return top, left, height, width


def _extent(coords: np.ndarray, n: int, torus: bool) -> tuple[int, int]:
    occupied = np.zeros(n, bool)
    occupied[coords] = True
    if not torus or occupied.all():
        lo = int(coords.min()) if not occupied.all() else 0
        return lo, (int(coords.max()) - lo + 1) if not occupied.all() else n
    # the smallest covering arc starts right after the largest empty gap
    empty = ~occupied
    best_len, best_end = 0, 0
    run = 0
    for i in range(2 * n):
        if empty[i % n]:
            run += 1
            if run > best_len:
                best_len, best_end = run, i
        else:
            run = 0
    best_len = min(best_len, n)
    start = (best_end + 1) % n
    return start, n - best_len


def label(mask: np.ndarray, torus: bool = True) -> tuple[np.ndarray, int]:
    """8-connected labeling of a boolean mask; labels are 1..n, 0 is background."""
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if not torus or n == 0:
        return labels, n
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        if a and b:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    h, w = mask.shape
    for j in range(w):
        for dj in (-1, 0, 1):
            union(labels[h - 1, j], labels[0, (j + dj) % w])
    for i in range(h):
        for di in (-1, 0, 1):
            union(labels[i, w - 1], labels[(i + di) % h, 0])
    roots = np.array([find(a) for a in range(n + 1)])
    uniq = np.unique(roots[1:])
    remap = np.zeros(n + 1, int)
    remap[1:] = np.searchsorted(uniq, roots[1:]) + 1
    return remap[labels], len(uniq)


def components(mask: np.ndarray, torus: bool = True) -> list[Component]:
    """Components in row-major order of their first cell."""
    labels, n = label(mask, torus)
    out = []
    for k in range(1, n + 1):
        cells = np.argwhere(labels == k)
        out.append(Component(k, cells, (int(cells[0, 0]), int(cells[0, 1]))))
    out.sort(key=lambda c: c.first)
    return out


def count_components(mask: np.ndarray, torus: bool = True, min_size: int = 1) -> int:
    return sum(c.size >= min_size for c in components(mask, torus))
