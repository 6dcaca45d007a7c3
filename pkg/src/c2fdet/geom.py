"""Rectangle arithmetic shared by every stage of the pipeline.

Boxes are ``(left, top, width, height)`` in real-valued pixels. Nothing here
rounds; integer pixel rects are produced only when chips are rendered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DegenerateClampError(ValueError):
    """Raised when clamping a box to an image leaves nothing of it."""


@dataclass(frozen=True, slots=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"box {name} must be finite, got {getattr(self, name)!r}")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box width and height must be positive, got {self.w}x{self.h}")

    @classmethod
    def from_xyxy(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "Box":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def xyxy(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x2, self.y2)

    def contains_point(self, px: float, py: float) -> bool:
        """Half-open containment, so adjacent boxes never both claim a point."""
        return self.x <= px < self.x2 and self.y <= py < self.y2

    def contains(self, other: "Box", tol: float = 0.0) -> bool:
        return (
            other.x >= self.x - tol
            and other.y >= self.y - tol
            and other.x2 <= self.x2 + tol
            and other.y2 <= self.y2 + tol
        )


@dataclass(frozen=True, slots=True)
class ImageDims:
    W: int
    H: int

    def __post_init__(self) -> None:
        if self.W < 1 or self.H < 1:
            raise ValueError(f"image dims must be >= 1, got {self.W}x{self.H}")

    @property
    def area(self) -> int:
        return self.W * self.H


@dataclass(frozen=True, slots=True)
class Transform2D:
    """Uniform scale followed by translation: ``p' = p * scale + offset``."""

    scale: float = 1.0
    offset_x: float = 0.0
    offset_y: float = 0.0

    def __post_init__(self) -> None:
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"transform scale must be positive, got {self.scale!r}")

    def apply_point(self, x: float, y: float) -> tuple[float, float]:
        return x * self.scale + self.offset_x, y * self.scale + self.offset_y


IDENTITY = Transform2D()


def intersection_area(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def intersection(a: Box, b: Box) -> Box | None:
    x1, y1 = max(a.x, b.x), max(a.y, b.y)
    x2, y2 = min(a.x2, b.x2), min(a.y2, b.y2)
    if x2 <= x1 or y2 <= y1:
        return None
    return Box(x1, y1, x2 - x1, y2 - y1)


def iou(a: Box, b: Box) -> float:
    """Intersection over union; boxes sharing only an edge give 0."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    # rounding in x + w can push identical boxes a hair past 1
    return min(inter / (a.area + b.area - inter), 1.0)


def union_box(boxes: Iterable[Box]) -> Box:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("union_box needs at least one box")
    x1 = min(b.x for b in boxes)
    y1 = min(b.y for b in boxes)
    x2 = max(b.x2 for b in boxes)
    y2 = max(b.y2 for b in boxes)
    return Box(x1, y1, x2 - x1, y2 - y1)


def apply_transform(b: Box, t: Transform2D) -> Box:
    x, y = t.apply_point(b.x, b.y)
    return Box(x, y, b.w * t.scale, b.h * t.scale)


def invert(t: Transform2D) -> Transform2D:
    s = 1.0 / t.scale
    return Transform2D(s, -t.offset_x * s, -t.offset_y * s)


def compose(first: Transform2D, second: Transform2D) -> Transform2D:
    """Transform equivalent to applying ``first`` and then ``second``."""
    return Transform2D(
        first.scale * second.scale,
        first.offset_x * second.scale + second.offset_x,
        first.offset_y * second.scale + second.offset_y,
    )


def clamp_box(b: Box, dims: ImageDims) -> Box:
    x1, y1 = max(b.x, 0.0), max(b.y, 0.0)
    x2, y2 = min(b.x2, float(dims.W)), min(b.y2, float(dims.H))
    if x2 <= x1 or y2 <= y1:
        raise DegenerateClampError(f"box {b.as_list()} lies outside {dims.W}x{dims.H} image")
    if (x1, y1, x2, y2) == b.xyxy():
        return b
    return Box(x1, y1, x2 - x1, y2 - y1)


def shift_inside(b: Box, dims: ImageDims) -> Box:
    """Translate ``b`` so it lies inside the image when it fits, then clamp."""
    x = min(max(b.x, 0.0), max(dims.W - b.w, 0.0))
    y = min(max(b.y, 0.0), max(dims.H - b.h, 0.0))
    return clamp_box(Box(x, y, b.w, b.h), dims)


def scale_box(b: Box, s: float) -> Box:
    return Box(b.x * s, b.y * s, b.w * s, b.h * s)


def boxes_to_array(boxes: Sequence[Box]):
    """Stack boxes as an ``(n, 4)`` float64 array of ``x1, y1, x2, y2``."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.xyxy() for b in boxes], dtype=np.float64)
