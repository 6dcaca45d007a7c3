"""Resize cluster regions to a common row height and shelf-pack them into chips."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .geom import (
    Box,
    ImageDims,
    Transform2D,
    apply_transform,
    intersection,
    intersection_area,
    shift_inside,
)
from .nmm import ClusterRegion
from .proposal import Detection

FILL_VALUE = 128
TRANSFER_RATIO = 0.85


@dataclass(frozen=True)
class Placement:
    region_id: int
    src: Box
    dst: Box
    scale: float
    chip_id: int

    @property
    def transform(self) -> Transform2D:
        """Original frame to chip frame."""
        return Transform2D(
            self.scale,
            self.dst.x - self.src.x * self.scale,
            self.dst.y - self.src.y * self.scale,
        )

    @property
    def inverse(self) -> Transform2D:
        """Chip frame to original frame."""
        s = 1.0 / self.scale
        return Transform2D(s, self.src.x - self.dst.x * s, self.src.y - self.dst.y * s)

    def to_dict(self) -> dict[str, Any]:
        return {
            "region_id": self.region_id,
            "src": self.src.as_list(),
            "dst": self.dst.as_list(),
            "scale": self.scale,
        }


@dataclass(frozen=True)
class ChipLayout:
    chip_size: int
    rows: int
    row_height: int
    placements: tuple[Placement, ...] = field(default_factory=tuple)
    chip_count: int = 0
    gap: int = 1

    def chip(self, chip_id: int) -> list[Placement]:
        return [p for p in self.placements if p.chip_id == chip_id]

    def to_dict(self) -> dict[str, Any]:
        chips = [
            {"chip_id": k, "placements": [p.to_dict() for p in self.chip(k)]}
            for k in range(self.chip_count)
        ]
        return {
            "chip_size": self.chip_size,
            "rows": self.rows,
            "row_height": self.row_height,
            "gap": self.gap,
            "chips": chips,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ChipLayout":
        chip_size, rows = int(data["chip_size"]), int(data["rows"])
        placements = []
        for chip in data["chips"]:
            k = int(chip["chip_id"])
            for p in chip["placements"]:
                placements.append(
                    Placement(
                        int(p["region_id"]),
                        Box(*map(float, p["src"])),
                        Box(*map(float, p["dst"])),
                        float(p["scale"]),
                        k,
                    )
                )
        return cls(
            chip_size=chip_size,
            rows=rows,
            row_height=int(data.get("row_height", chip_size // rows)),
            placements=tuple(placements),
            chip_count=len(data["chips"]),
            gap=int(data.get("gap", 1)),
        )


@dataclass(frozen=True, eq=False)
class ChipImage:
    pixels: np.ndarray
    chip_id: int


def _region_box(r: ClusterRegion | Box) -> Box:
    return r.box if isinstance(r, ClusterRegion) else r


def _sized(
    src: Box, row_height: int, chip_size: int, h_min: float | None, dims: ImageDims | None
) -> tuple[Box, int, int, float]:
    scale = row_height / src.h
    if h_min is not None:
        scale = min(scale, row_height / h_min)
    if src.w * scale > chip_size:
        scale = chip_size / src.w
    dst_w = min(chip_size, max(1, round(src.w * scale)))
    dst_h = min(row_height, max(1, round(src.h * scale)))
    # snap the source rect so both axes share the scale exactly
    snapped = Box.from_center(src.cx, src.cy, dst_w / scale, dst_h / scale)
    if dims is not None and snapped.w <= dims.W and snapped.h <= dims.H:
        snapped = shift_inside(snapped, dims)
    return snapped, dst_w, dst_h, scale


def plan_chips(
    regions: Sequence[ClusterRegion | Box],
    rows: int = 4,
    row_height: int = 160,
    *,
    gap: int = 1,
    h_min: float | None = None,
    order: str = "width-desc",
    dims: ImageDims | None = None,
) -> ChipLayout:
    """Shelf-pack regions into square chips of side ``rows * row_height``.

    Every region is scaled to ``row_height`` (capped at ``row_height / h_min``
    when ``h_min`` is given, and shrunk further if it would be wider than a
    chip). Rows are filled left to right with ``gap`` px between neighbours;
    after ``rows`` rows a new chip is opened.
    """
    if rows < 1 or row_height < 1:
        raise ValueError("rows and row_height must be >= 1")
    if order not in ("width-desc", "arrival"):
        raise ValueError(f"unknown packing order {order!r}")
    chip_size = rows * row_height
    items = []
    for rid, region in enumerate(regions):
        items.append((rid, *_sized(_region_box(region), row_height, chip_size, h_min, dims)))
    if order == "width-desc":
        items.sort(key=lambda it: (-it[2], it[0]))

    placements = []
    chip, row, x = 0, 0, 0
    for rid, src, dst_w, dst_h, scale in items:
        start = x + gap if x > 0 else 0
        if start + dst_w > chip_size:
            row, start = row + 1, 0
            if row == rows:
                chip, row = chip + 1, 0
        dst = Box(float(start), float(row * row_height), float(dst_w), float(dst_h))
        placements.append(Placement(rid, src, dst, scale, chip))
        x = start + dst_w
    placements.sort(key=lambda p: (p.chip_id, p.dst.y, p.dst.x))
    return ChipLayout(
        chip_size=chip_size,
        rows=rows,
        row_height=row_height,
        placements=tuple(placements),
        chip_count=chip + 1 if placements else 0,
        gap=gap,
    )


def _bilinear(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``image`` at continuous pixel-center coordinates, edges clamped."""
    H, W = image.shape[:2]
    fx, fy = xs - 0.5, ys - 0.5
    x0, y0 = np.floor(fx), np.floor(fy)
    wx, wy = fx - x0, fy - y0
    x0i = np.clip(x0.astype(np.int64), 0, W - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, W - 1)
    y0i = np.clip(y0.astype(np.int64), 0, H - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, H - 1)
    img = image.astype(np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    wx = wx[None, :, None]
    wy = wy[:, None, None]
    top = img[y0i][:, x0i] * (1 - wx) + img[y0i][:, x1i] * wx
    bottom = img[y1i][:, x0i] * (1 - wx) + img[y1i][:, x1i] * wx
    return top * (1 - wy) + bottom * wy


def render_placement(image: np.ndarray, p: Placement) -> np.ndarray:
    """Pixels of one placement, sampled through its exact inverse transform."""
    dw, dh = int(round(p.dst.w)), int(round(p.dst.h))
    xs = p.src.x + (np.arange(dw) + 0.5) / p.scale
    ys = p.src.y + (np.arange(dh) + 0.5) / p.scale
    # integer crop (floor/ceil) plus one pixel of context for interpolation
    H, W = image.shape[:2]
    cx0 = max(int(np.floor(p.src.x)) - 1, 0)
    cy0 = max(int(np.floor(p.src.y)) - 1, 0)
    cx1 = min(int(np.ceil(p.src.x2)) + 1, W)
    cy1 = min(int(np.ceil(p.src.y2)) + 1, H)
    crop = image[cy0:cy1, cx0:cx1]
    return _bilinear(crop, xs - cx0, ys - cy0)


def render_chip(source_image: np.ndarray, layout: ChipLayout, chip_id: int, fill: int = FILL_VALUE) -> ChipImage:
    if not 0 <= chip_id < layout.chip_count:
        raise ValueError(f"chip {chip_id} not in layout with {layout.chip_count} chips")
    img = np.asarray(source_image)
    channels = () if img.ndim == 2 else (img.shape[2],)
    out = np.full((layout.chip_size, layout.chip_size) + channels, fill, dtype=img.dtype)
    for p in layout.chip(chip_id):
        patch = render_placement(img, p)
        if not channels:
            patch = patch[:, :, 0]
        if np.issubdtype(img.dtype, np.integer):
            info = np.iinfo(img.dtype)
            patch = np.clip(np.rint(patch), info.min, info.max)
        x, y = int(round(p.dst.x)), int(round(p.dst.y))
        out[y : y + patch.shape[0], x : x + patch.shape[1]] = patch.astype(img.dtype)
    return ChipImage(out, chip_id)


def transfer_ground_truth(
    gts: Iterable[Detection], layout: ChipLayout, ratio: float = TRANSFER_RATIO
) -> dict[int, list[Detection]]:
    """Ground truth in chip frames, keyed by chip id.

    A box is transferred to a placement when more than ``ratio`` of its area
    lies inside the placement source; the transferred box is the clipped part.
    """
    out: dict[int, list[Detection]] = {k: [] for k in range(layout.chip_count)}
    for gt in gts:
        for p in layout.placements:
            if intersection_area(gt.box, p.src) <= ratio * gt.box.area:
                continue
            clipped = intersection(gt.box, p.src)
            out[p.chip_id].append(replace(gt, box=apply_transform(clipped, p.transform)))
    return out
