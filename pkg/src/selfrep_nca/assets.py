"""Procedurally drawn RGBA sprites standing in for emoji targets.

Shapes are rasterized with 4x4 supersampling so edges carry fractional
alpha. All functions return straight (non-premultiplied) RGBA float arrays
of shape ``(h, w, 4)`` in [0, 1].
"""
from __future__ import annotations

import numpy as np

_SS = 4


def _coords(h: int, w: int):
    ys = (np.arange(h * _SS) + 0.5) / _SS
    xs = (np.arange(w * _SS) + 0.5) / _SS
    return np.meshgrid(ys, xs, indexing="ij")


def _downsample(layer: np.ndarray) -> np.ndarray:
    h, w = layer.shape[0] // _SS, layer.shape[1] // _SS
    return layer.reshape(h, _SS, w, _SS, *layer.shape[2:]).mean(axis=(1, 3))


class _Canvas:
    def __init__(self, h: int, w: int):
        self.y, self.x = _coords(h, w)
        self.rgba = np.zeros((h * _SS, w * _SS, 4))

    def paint(self, mask: np.ndarray, rgb):
        self.rgba[mask, :3] = rgb
        self.rgba[mask, 3] = 1.0

    def ellipse(self, cy, cx, ry, rx) -> np.ndarray:
        return ((self.y - cy) / ry) ** 2 + ((self.x - cx) / rx) ** 2 <= 1.0

    def finish(self) -> np.ndarray:
        # average premultiplied color, then un-premultiply
        pm = self.rgba.copy()
        pm[..., :3] *= pm[..., 3:]
        small = _downsample(pm)
        a = small[..., 3:]
        small[..., :3] = np.where(a > 0, small[..., :3] / np.maximum(a, 1e-12), 0.0)
        return np.clip(small, 0.0, 1.0)


def bacteria_sprite(size: int = 24) -> np.ndarray:
    """Rounded green cell body with a darker rim and a yellow nucleus."""
    c = _Canvas(size, size)
    cy = cx = size / 2
    c.paint(c.ellipse(cy, cx, 0.36 * size, 0.46 * size), (0.16, 0.45, 0.12))
    c.paint(c.ellipse(cy, cx, 0.29 * size, 0.39 * size), (0.45, 0.78, 0.30))
    c.paint(c.ellipse(cy, cx, 0.11 * size, 0.13 * size), (0.98, 0.85, 0.20))
    return c.finish()


def fish_sprite(width: int = 16, height: int | None = None, stripes: int = 3) -> np.ndarray:
    """Side view of a yellow fish facing left, with dark vertical stripes."""
    height = height or max(3, round(width * 0.625))
    c = _Canvas(height, width)
    cy = height / 2
    body_cx, body_rx = 0.42 * width, 0.38 * width
    tail = (c.x > 0.70 * width) & (np.abs(c.y - cy) <= (c.x - 0.70 * width) * 1.3) & (c.x < 0.98 * width)
    c.paint(tail, (0.95, 0.65, 0.10))
    body = c.ellipse(cy, body_cx, 0.42 * height, body_rx)
    c.paint(body, (1.0, 0.82, 0.15))
    for k in range(stripes):
        sx = body_cx - 0.45 * body_rx + k * (0.9 * body_rx / max(stripes - 1, 1))
        c.paint(body & (np.abs(c.x - sx) <= 0.055 * width), (0.05, 0.05, 0.05))
    c.paint(c.ellipse(cy - 0.12 * height, body_cx - 0.72 * body_rx, 0.07 * height, 0.045 * width),
            (0.05, 0.05, 0.35))
    return c.finish()


def lizard_sprite(width: int = 16, height: int | None = None) -> np.ndarray:
    """Green lizard seen from above: long body, tail to the right, four legs."""
    height = height or max(3, round(width * 0.625))
    c = _Canvas(height, width)
    cy = height / 2
    for lx in (0.30, 0.55):
        for side in (-1, 1):
            leg = (np.abs(c.x - lx * width) <= 0.05 * width) & \
                  (np.abs(c.y - cy - side * 0.25 * height) <= 0.22 * height)
            c.paint(leg, (0.15, 0.50, 0.15))
    tail = (c.x > 0.62 * width) & (np.abs(c.y - cy) <= 0.14 * height * (1 - (c.x - 0.62 * width) / (0.38 * width)))
    c.paint(tail, (0.25, 0.65, 0.20))
    c.paint(c.ellipse(cy, 0.42 * width, 0.17 * height, 0.26 * width), (0.30, 0.72, 0.25))
    c.paint(c.ellipse(cy, 0.12 * width, 0.15 * height, 0.10 * width), (0.30, 0.72, 0.25))
    return c.finish()


def premultiply(rgba: np.ndarray) -> np.ndarray:
    out = np.array(rgba, dtype=np.float64, copy=True)
    out[..., :3] *= out[..., 3:4]
    return out


def place(sprite: np.ndarray, canvas_shape: tuple[int, int], top: int, left: int,
          wrap: bool = True) -> np.ndarray:
    """Composite a premultiplied sprite onto a zero canvas (later pixels win where opaque)."""
    h, w = canvas_shape
    out = np.zeros((h, w, sprite.shape[2]))
    sh, sw = sprite.shape[:2]
    rows = np.arange(top, top + sh)
    cols = np.arange(left, left + sw)
    if wrap:
        rows, cols = rows % h, cols % w
    elif rows.min() < 0 or cols.min() < 0 or rows.max() >= h or cols.max() >= w:
        raise ValueError("sprite does not fit on the canvas")
    out[np.ix_(rows, cols)] = sprite
    return out


def composite(*layers: np.ndarray) -> np.ndarray:
    """Premultiplied 'over' compositing, first layer at the bottom."""
    out = np.zeros_like(layers[0])
    for layer in layers:
        a = layer[..., 3:4]
        out = layer + out * (1.0 - a)
    return out
