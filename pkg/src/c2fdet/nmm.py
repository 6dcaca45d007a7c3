"""Modified Non-Max-Merge: group expanded proposals into cluster regions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .geom import Box, ImageDims, iou, shift_inside, union_box


@dataclass(frozen=True)
class NmmConfig:
    tau: float = 0.2
    gamma: float = 1.5
    h_min: float = 80.0

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.gamma < 1.0:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if self.h_min <= 0:
            raise ValueError("h_min must be > 0")


@dataclass(frozen=True)
class ClusterRegion:
    box: Box
    member_ids: tuple[int, ...] = field(default_factory=tuple)
    seed_id: int = -1


def merge_order(proposals: Sequence[Box]) -> list[int]:
    """Indices sorted by ascending area, ties by original index."""
    return sorted(range(len(proposals)), key=lambda i: (proposals[i].area, i))


def non_max_merge(proposals: Sequence[Box], cfg: NmmConfig | None = None) -> list[ClusterRegion]:
    """Greedy smallest-first merge under an IoU gate and a size cap.

    Each unvisited box seeds a region whose size limit is a square of side
    ``gamma`` times the seed height. A later box joins when its IoU with the
    seed exceeds ``tau`` and the grown region either fits inside ``h_min`` on
    both sides or inside the limit. Visited boxes never join another region.
    """
    cfg = cfg or NmmConfig()
    order = merge_order(proposals)
    visited = [False] * len(proposals)
    regions = []
    for pos, i in enumerate(order):
        if visited[i]:
            continue
        visited[i] = True
        seed = proposals[i]
        limit = cfg.gamma * seed.h
        region = seed
        members = [i]
        for j in order[pos + 1 :]:
            if visited[j] or iou(proposals[j], seed) <= cfg.tau:
                continue
            grown = union_box((region, proposals[j]))
            if grown.h > cfg.h_min or grown.w > cfg.h_min:
                if grown.h > limit or grown.w > limit:
                    continue
            visited[j] = True
            region = grown
            members.append(j)
        regions.append(ClusterRegion(region, tuple(members), i))
    return regions


def pad_small_region(r: ClusterRegion, h_min: float, dims: ImageDims) -> ClusterRegion:
    """Grow a region shorter than ``h_min`` to that height, keeping its aspect.

    The grown box is shifted back inside the image before clamping so its size
    survives near borders whenever the image is large enough.
    """
    if h_min <= 0:
        raise ValueError("h_min must be > 0")
    b = r.box
    if b.h >= h_min:
        return r
    new_w = b.w * h_min / b.h
    grown = Box.from_center(b.cx, b.cy, new_w, h_min)
    return ClusterRegion(shift_inside(grown, dims), r.member_ids, r.seed_id)
