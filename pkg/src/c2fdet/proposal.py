"""Coarse proposal boxes from coarse detections and decoded center points."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .geom import Box, DegenerateClampError, ImageDims, Transform2D, apply_transform, clamp_box
from .heatmap import CenterPoint

# category assigned to squares grown around center points (no class is predicted)
UNKNOWN_SMALL = -1


@dataclass(frozen=True, slots=True)
class Detection:
    box: Box
    score: float
    category: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ProposalConfig:
    coarse_threshold: float = 0.10
    center_threshold: float = 0.10
    dedup_distance: float = 20.0
    r_c: float = 48.0
    alpha: float = 1.5
    literal_eq2: bool = False

    def __post_init__(self) -> None:
        for name in ("coarse_threshold", "center_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.dedup_distance < 0:
            raise ValueError("dedup_distance must be >= 0")
        if self.r_c <= 0:
            raise ValueError("r_c must be > 0")
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")


def filter_detections(dets: Iterable[Detection], threshold: float) -> list[Detection]:
    return [d for d in dets if d.score >= threshold]


def dedup_centers(
    centers: Sequence[CenterPoint], coarse: Sequence[Detection], d: float = 20.0
) -> list[CenterPoint]:
    """Drop centers closer than ``d`` px to the center of any coarse box."""
    anchors = [(det.box.cx, det.box.cy) for det in coarse]
    return [
        c for c in centers if all(math.hypot(c.x - ax, c.y - ay) >= d for ax, ay in anchors)
    ]


def centers_to_squares(centers: Iterable[CenterPoint], r_c: float = 48.0) -> list[Detection]:
    if r_c <= 0:
        raise ValueError("r_c must be > 0")
    return [
        Detection(Box(c.x - r_c, c.y - r_c, 2 * r_c, 2 * r_c), c.score, UNKNOWN_SMALL)
        for c in centers
    ]


def expanded_size(h: float, w: float, alpha: float, literal: bool = False) -> tuple[float, float]:
    """New ``(h, w)`` of an expanded proposal.

    Tall boxes get extra width, wide boxes get a square of side ``alpha * h``.
    Unless ``literal`` is set, neither side is allowed to shrink.
    """
    ratio = h / w
    if ratio > 1.5:
        new_h, new_w = alpha * h, 1.5 * alpha * w
    elif ratio < 0.75:
        new_h, new_w = alpha * h, alpha * h
    else:
        new_h, new_w = alpha * h, alpha * w
    if not literal:
        new_h, new_w = max(new_h, h), max(new_w, w)
    return new_h, new_w


def expand_proposal(b: Box, alpha: float, literal: bool = False) -> Box:
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    new_h, new_w = expanded_size(b.h, b.w, alpha, literal)
    return Box.from_center(b.cx, b.cy, new_w, new_h)


def to_original_frame(dets: Iterable[Detection], downsample: float) -> list[Detection]:
    """Map detections from a uniformly downsampled view back to full resolution."""
    back = Transform2D(1.0 / downsample)
    return [replace(d, box=apply_transform(d.box, back)) for d in dets]


def coarse_proposals(
    coarse: Sequence[Detection], centers: Sequence[CenterPoint], cfg: ProposalConfig
) -> list[Detection]:
    """Unexpanded proposals: kept coarse detections followed by center squares."""
    kept = filter_detections(coarse, cfg.coarse_threshold)
    pts = [c for c in centers if c.score >= cfg.center_threshold]
    pts = dedup_centers(pts, kept, cfg.dedup_distance)
    return kept + centers_to_squares(pts, cfg.r_c)


def generate_proposals(
    coarse: Sequence[Detection],
    centers: Sequence[CenterPoint],
    dims: ImageDims,
    cfg: ProposalConfig | None = None,
) -> list[Box]:
    """Expanded proposal boxes clamped to the image, ready for merging.

    ``coarse`` must already be in the original-image frame.
    """
    cfg = cfg or ProposalConfig()
    out = []
    for det in coarse_proposals(coarse, centers, cfg):
        grown = expand_proposal(det.box, cfg.alpha, cfg.literal_eq2)
        try:
            out.append(clamp_box(grown, dims))
        except DegenerateClampError:
            continue
    return out
