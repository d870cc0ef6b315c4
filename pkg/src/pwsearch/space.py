"""Discrete (x, y, scale) window space: enumeration, indexing, and box geometry.

A window is a template placement on a scale pyramid.  Scale ``s`` zooms the
image out by ``scale_factor ** s`` while the template keeps its pixel size, so
the effective position grid shrinks as ``s`` grows.  Window coordinates are
grid indices in the zoomed image of their own scale; ``to_box`` maps them back
to original-image coordinates as center-based boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterator

import numpy as np


@dataclass(frozen=True, order=True)
class Window:
    """Template placement: top-left grid cell (x, y) at pyramid scale s."""

    x: int
    y: int
    s: int


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in original-image coordinates, center based."""

    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class SearchSpace:
    """All candidate windows for one image size / template / pyramid setup.

    ``stride`` is the grid pitch in zoomed-image pixels.  Particle-style
    samplers run on a stride-1 space; an exhaustive scan typically uses a
    coarser one (see :meth:`at_stride`).
    """

    image_w: int
    image_h: int
    template_w: int
    template_h: int
    stride: int = 1
    scale_factor: float = 1.2
    scale_count: int = 1

    def __post_init__(self) -> None:
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError("image dimensions must be positive")
        if self.template_w < 1 or self.template_h < 1:
            raise ValueError("template dimensions must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be > 1")
        if self.scale_count < 1:
            raise ValueError("scale_count must be >= 1")

    def zoom(self, s: int) -> float:
        return self.scale_factor ** s

    def grid_size(self, s: int) -> tuple[int, int]:
        """(nx, ny) valid template positions at scale s; (0, 0) if it no longer fits."""
        zw = int(self.image_w / self.zoom(s))
        zh = int(self.image_h / self.zoom(s))
        if zw < self.template_w or zh < self.template_h:
            return (0, 0)
        nx = (zw - self.template_w) // self.stride + 1
        ny = (zh - self.template_h) // self.stride + 1
        return (nx, ny)

    @cached_property
    def _per_scale(self) -> list[tuple[int, int]]:
        return [self.grid_size(s) for s in range(self.scale_count)]

    @cached_property
    def _offsets(self) -> np.ndarray:
        counts = [nx * ny for nx, ny in self._per_scale]
        return np.concatenate(([0], np.cumsum(counts)))

    @cached_property
    def _nx_table(self) -> np.ndarray:
        return np.array([nx for nx, _ in self._per_scale], dtype=np.int64)

    @cached_property
    def _ny_table(self) -> np.ndarray:
        return np.array([ny for _, ny in self._per_scale], dtype=np.int64)

    @cached_property
    def _zoom_table(self) -> np.ndarray:
        return self.scale_factor ** np.arange(self.scale_count, dtype=float)

    @property
    def window_count(self) -> int:
        return int(self._offsets[-1])

    def contains(self, w: Window) -> bool:
        if not 0 <= w.s < self.scale_count:
            return False
        nx, ny = self._per_scale[w.s]
        return 0 <= w.x < nx and 0 <= w.y < ny

    def index_of(self, w: Window) -> int:
        """Dense index consistent with enumeration order."""
        if not self.contains(w):
            raise ValueError(f"window {w} outside search space")
        nx, _ = self._per_scale[w.s]
        return int(self._offsets[w.s]) + w.y * nx + w.x

    def window_at(self, index: int) -> Window:
        if not 0 <= index < self.window_count:
            raise IndexError(f"window index {index} out of range")
        s = int(np.searchsorted(self._offsets, index, side="right")) - 1
        rem = index - int(self._offsets[s])
        nx, _ = self._per_scale[s]
        y, x = divmod(rem, nx)
        return Window(x, y, s)

    def windows(self) -> Iterator[Window]:
        """Every window: rows top to bottom, cells left to right, scales small to large."""
        for s in range(self.scale_count):
            nx, ny = self._per_scale[s]
            for y in range(ny):
                for x in range(nx):
                    yield Window(x, y, s)

    def to_box(self, w: Window) -> Box:
        """Original-image box covered by the window."""
        if not self.contains(w):
            raise ValueError(f"window {w} outside search space")
        z = self.zoom(w.s)
        cx = (w.x * self.stride + self.template_w * 0.5) * z
        cy = (w.y * self.stride + self.template_h * 0.5) * z
        return Box(cx, cy, self.template_w * z, self.template_h * z)

    def project(self, w: Window, s: int) -> tuple[float, float]:
        """Real-valued grid coordinates at scale ``s`` of the window's center.

        Out-of-range results are returned as-is; callers clamp or clip.
        """
        z = self.zoom(w.s) / self.zoom(s)
        gx = ((w.x * self.stride + self.template_w * 0.5) * z - self.template_w * 0.5) / self.stride
        gy = ((w.y * self.stride + self.template_h * 0.5) * z - self.template_h * 0.5) / self.stride
        return (gx, gy)

    def nearest_window(self, cx: float, cy: float, s: int) -> Window | None:
        """Grid window at scale s whose center is nearest to original-image (cx, cy)."""
        if not 0 <= s < self.scale_count:
            return None
        nx, ny = self._per_scale[s]
        if nx == 0:
            return None
        z = self.zoom(s)
        x = round((cx / z - self.template_w * 0.5) / self.stride)
        y = round((cy / z - self.template_h * 0.5) / self.stride)
        x = min(max(x, 0), nx - 1)
        y = min(max(y, 0), ny - 1)
        return Window(x, y, s)

    def at_stride(self, stride: int) -> "SearchSpace":
        return replace(self, stride=stride)


def overlap(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    ax0, ax1 = a.cx - a.w * 0.5, a.cx + a.w * 0.5
    ay0, ay1 = a.cy - a.h * 0.5, a.cy + a.h * 0.5
    bx0, bx1 = b.cx - b.w * 0.5, b.cx + b.w * 0.5
    by0, by1 = b.cy - b.h * 0.5, b.cy + b.h * 0.5
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0.0:
        return 0.0
    return inter / union
