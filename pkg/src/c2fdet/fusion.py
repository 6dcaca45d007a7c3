"""Map chip detections back to the image and fuse them with coarse results."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .chips import ChipLayout, Placement
from .geom import ImageDims, apply_transform, boxes_to_array
from .proposal import Detection

ChipDetections = Mapping[int, Sequence[Detection]]


@dataclass(frozen=True)
class FusionConfig:
    nms_iou: float = 0.6
    boundary_eps: float = 2.0
    large_area: float = 96.0**2
    fuse_coarse: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.nms_iou < 1.0:
            raise ValueError(f"nms_iou must be in (0, 1), got {self.nms_iou}")
        if self.boundary_eps < 0:
            raise ValueError("boundary_eps must be >= 0")


class UnknownChipError(KeyError):
    def __init__(self, chip_id) -> None:
        super().__init__(chip_id)
        self.chip_id = chip_id

    def __str__(self) -> str:
        return f"unknown chip id {self.chip_id!r}"


def assign_placement(det: Detection, placements: Sequence[Placement]) -> Placement | None:
    """The placement whose destination contains the detection center, if any."""
    cx, cy = det.box.cx, det.box.cy
    for p in placements:
        if p.dst.contains_point(cx, cy):
            return p
    return None


def _chip_placements(layout: ChipLayout, chip_id: int) -> list[Placement]:
    if not 0 <= chip_id < layout.chip_count:
        raise UnknownChipError(chip_id)
    return layout.chip(chip_id)


def remap_detections(fine: ChipDetections, layout: ChipLayout) -> list[Detection]:
    out = []
    for chip_id in sorted(fine):
        placements = _chip_placements(layout, chip_id)
        for det in fine[chip_id]:
            p = assign_placement(det, placements)
            if p is None:
                continue
            out.append(replace(det, box=apply_transform(det.box, p.inverse)))
    return out


def keep_at_boundary(det: Detection, p: Placement, dims: ImageDims, eps: float) -> bool:
    """Whether a chip detection survives the region-boundary checks.

    A box may not overflow its placement by more than ``eps`` chip px, and may
    not touch a placement edge unless the matching source edge sits on the
    image border (where a truncated object is genuine).
    """
    b, d, s = det.box, p.dst, p.src
    if b.x < d.x - eps or b.y < d.y - eps or b.x2 > d.x2 + eps or b.y2 > d.y2 + eps:
        return False
    tol = eps / p.scale
    if b.x <= d.x + eps and s.x > tol:
        return False
    if b.y <= d.y + eps and s.y > tol:
        return False
    if b.x2 >= d.x2 - eps and s.x2 < dims.W - tol:
        return False
    if b.y2 >= d.y2 - eps and s.y2 < dims.H - tol:
        return False
    return True


def filter_boundary(
    fine: ChipDetections, layout: ChipLayout, dims: ImageDims, eps: float = 2.0
) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    for chip_id in sorted(fine):
        placements = _chip_placements(layout, chip_id)
        kept = []
        for det in fine[chip_id]:
            p = assign_placement(det, placements)
            if p is not None and keep_at_boundary(det, p, dims, eps):
                kept.append(det)
        out[chip_id] = kept
    return out


def _iou_one_to_many(box: np.ndarray, others: np.ndarray) -> np.ndarray:
    iw = np.minimum(box[2], others[:, 2]) - np.maximum(box[0], others[:, 0])
    ih = np.minimum(box[3], others[:, 3]) - np.maximum(box[1], others[:, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area = (box[2] - box[0]) * (box[3] - box[1])
    areas = (others[:, 2] - others[:, 0]) * (others[:, 3] - others[:, 1])
    return inter / (area + areas - inter)


def nms(dets: Sequence[Detection], iou_thr: float = 0.6) -> list[Detection]:
    """Greedy per-category NMS; output ordered by descending score."""
    if not dets:
        return []
    boxes = boxes_to_array([d.box for d in dets])
    scores = np.array([d.score for d in dets])
    cats = np.array([d.category for d in dets])
    order = np.argsort(-scores, kind="stable")
    alive = np.ones(len(dets), dtype=bool)
    keep = []
    for pos, i in enumerate(order):
        if not alive[i]:
            continue
        keep.append(i)
        rest = order[pos + 1 :]
        rest = rest[alive[rest] & (cats[rest] == cats[i])]
        if rest.size:
            alive[rest[_iou_one_to_many(boxes[i], boxes[rest]) > iou_thr]] = False
    return [dets[i] for i in keep]


def fuse(
    coarse: Sequence[Detection],
    fine_remapped: Sequence[Detection],
    cfg: FusionConfig | None = None,
) -> list[Detection]:
    cfg = cfg or FusionConfig()
    if not cfg.fuse_coarse:
        return nms(fine_remapped, cfg.nms_iou)
    fine = [d for d in fine_remapped if d.box.area < cfg.large_area]
    return nms(list(coarse) + fine, cfg.nms_iou)


def fuse_image(
    coarse: Sequence[Detection],
    fine: ChipDetections,
    layout: ChipLayout,
    dims: ImageDims,
    cfg: FusionConfig | None = None,
) -> list[Detection]:
    """Boundary filter, remap and fuse for one image."""
    cfg = cfg or FusionConfig()
    kept = filter_boundary(fine, layout, dims, cfg.boundary_eps)
    return fuse(coarse, remap_detections(kept, layout), cfg)
