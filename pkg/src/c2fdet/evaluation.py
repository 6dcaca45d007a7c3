"""COCO-protocol AP, size buckets, chip recall rate and dataset size statistics."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .chips import TRANSFER_RATIO, ChipLayout
from .geom import ImageDims, boxes_to_array, intersection_area
from .proposal import Detection

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_THRESHOLDS = np.linspace(0.0, 1.0, 101)
# closed-left buckets: an area of exactly 32**2 is medium, 96**2 is large
AREA_RANGES = {
    "all": (0.0, math.inf),
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, math.inf),
}

PerImage = Mapping[str, Sequence[Detection]]


class NoGroundTruthWarning(UserWarning):
    pass


def _as_per_image(x: PerImage | Sequence[Detection]) -> Mapping[str, Sequence[Detection]]:
    if isinstance(x, Mapping):
        return x
    return {"": list(x)}


def _pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def _outside(area: float, rng: tuple[float, float]) -> bool:
    return not (rng[0] <= area < rng[1])


def _match_image(dets, gts, iou_thrs, area_rng, max_dets):
    """Greedy score-ordered matching for one image and category.

    Returns detection scores, a ``(T, D)`` true-positive mask, a ``(T, D)``
    ignore mask and the number of non-ignored ground truths.
    """
    g_ig = np.array([_outside(g.box.area, area_rng) for g in gts], dtype=bool)
    g_order = np.argsort(g_ig, kind="stable")
    gts = [gts[i] for i in g_order]
    g_ig = g_ig[g_order]
    d_order = np.argsort([-d.score for d in dets], kind="stable")[:max_dets]
    dets = [dets[i] for i in d_order]
    scores = np.array([d.score for d in dets], dtype=np.float64)
    T, D, G = len(iou_thrs), len(dets), len(gts)
    tp = np.zeros((T, D), dtype=bool)
    d_ig = np.zeros((T, D), dtype=bool)
    if D and G:
        ious = _pairwise_iou(boxes_to_array([d.box for d in dets]), boxes_to_array([g.box for g in gts]))
    for t, thr in enumerate(iou_thrs):
        taken = np.zeros(G, dtype=bool)
        for di in range(D):
            best = min(thr, 1 - 1e-10)
            m = -1
            for gi in range(G):
                if taken[gi]:
                    continue
                if m > -1 and not g_ig[m] and g_ig[gi]:
                    break
                if ious[di, gi] < best:
                    continue
                best = ious[di, gi]
                m = gi
            if m == -1:
                d_ig[t, di] = _outside(dets[di].box.area, area_rng)
                continue
            taken[m] = True
            tp[t, di] = True
            d_ig[t, di] = g_ig[m]
    return scores, tp, d_ig, int((~g_ig).sum())


def _precision_at_recall(tp: np.ndarray, fp: np.ndarray, n_gt: int, interp: str) -> float:
    if tp.size == 0:
        return 0.0
    tp_sum = np.cumsum(tp, dtype=np.float64)
    fp_sum = np.cumsum(fp, dtype=np.float64)
    rc = tp_sum / n_gt
    pr = tp_sum / (tp_sum + fp_sum)
    # precision envelope: best precision at any recall at or beyond this one
    pr = np.maximum.accumulate(pr[::-1])[::-1]
    if interp == "auc":
        prev = np.concatenate([[0.0], rc[:-1]])
        return float(np.sum((rc - prev) * pr))
    idx = np.searchsorted(rc, RECALL_THRESHOLDS, side="left")
    q = np.zeros(RECALL_THRESHOLDS.size)
    found = idx < rc.size
    q[found] = pr[idx[found]]
    return float(np.mean(q))


def ap_table(
    dets: PerImage | Sequence[Detection],
    gts: PerImage | Sequence[Detection],
    iou_thrs: Sequence[float] = tuple(IOU_THRESHOLDS),
    area_range: tuple[float, float] = AREA_RANGES["all"],
    max_dets: int = 100,
    interp: str = "101",
) -> np.ndarray:
    """AP per ``(iou threshold, category)``; ``nan`` where a category has no ground truth."""
    if interp not in ("101", "auc"):
        raise ValueError(f"unknown interpolation {interp!r}")
    dets, gts = _as_per_image(dets), _as_per_image(gts)
    images = sorted(set(dets) | set(gts))
    cats = sorted({d.category for v in gts.values() for d in v} | {d.category for v in dets.values() for d in v})
    out = np.full((len(iou_thrs), len(cats)), np.nan)
    for k, cat in enumerate(cats):
        per_img = []
        n_gt = 0
        for img in images:
            d = [x for x in dets.get(img, ()) if x.category == cat]
            g = [x for x in gts.get(img, ()) if x.category == cat]
            if not d and not g:
                continue
            s, tp, ig, n = _match_image(d, g, iou_thrs, area_range, max_dets)
            per_img.append((s, tp, ig))
            n_gt += n
        if n_gt == 0:
            continue
        scores = np.concatenate([p[0] for p in per_img])
        order = np.argsort(-scores, kind="mergesort")
        tp_all = np.concatenate([p[1] for p in per_img], axis=1)[:, order]
        ig_all = np.concatenate([p[2] for p in per_img], axis=1)[:, order]
        for t in range(len(iou_thrs)):
            keep = ~ig_all[t]
            tp = tp_all[t][keep]
            out[t, k] = _precision_at_recall(tp, ~tp, n_gt, interp)
    return out


def _mean_or_none(table: np.ndarray) -> float | None:
    vals = table[~np.isnan(table)]
    return float(vals.mean()) if vals.size else None


def average_precision(
    dets: PerImage | Sequence[Detection],
    gts: PerImage | Sequence[Detection],
    iou_thr: float = 0.5,
    *,
    max_dets: int = 100,
    interp: str = "101",
) -> float:
    """AP at one IoU threshold, averaged over categories that have ground truth.

    With no ground truth at all the result is 0.0 and a
    :class:`NoGroundTruthWarning` is emitted.
    """
    ap = _mean_or_none(ap_table(dets, gts, [iou_thr], max_dets=max_dets, interp=interp))
    if ap is None:
        warnings.warn("no ground truth boxes; AP defined as 0", NoGroundTruthWarning, stacklevel=2)
        return 0.0
    return ap


def coco_ap(dets, gts, area: str = "all", max_dets: int = 100) -> float | None:
    """AP averaged over IoU 0.50:0.05:0.95; ``None`` when the bucket is empty."""
    return _mean_or_none(ap_table(dets, gts, IOU_THRESHOLDS, AREA_RANGES[area], max_dets))


def size_bucketed_ap(dets, gts, max_dets: int = 100) -> tuple[float | None, float | None, float | None]:
    return tuple(coco_ap(dets, gts, area, max_dets) for area in ("small", "medium", "large"))


def recall_rate(
    layouts: Mapping[str, ChipLayout],
    gts: PerImage,
    ratio: float = TRANSFER_RATIO,
) -> float | None:
    """Share of ground truth boxes that more than ``ratio`` fall inside some chip region."""
    total = hit = 0
    for img, boxes in gts.items():
        layout = layouts.get(img)
        srcs = [p.src for p in layout.placements] if layout is not None else []
        for g in boxes:
            total += 1
            if any(intersection_area(g.box, s) > ratio * g.box.area for s in srcs):
                hit += 1
    return hit / total if total else None


@dataclass(frozen=True)
class EvalReport:
    AP: float | None
    AP50: float | None
    AP75: float | None
    AP_s: float | None
    AP_m: float | None
    AP_l: float | None
    recall_rate: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        names = list(self.to_dict())
        cells = ["n/a" if v is None else f"{100 * v:.1f}" for v in self.to_dict().values()]
        widths = [max(len(a), len(b)) for a, b in zip(names, cells)]
        head = "  ".join(n.rjust(w) for n, w in zip(names, widths))
        row = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return f"{head}\n{row}"


def evaluate(
    dets: PerImage,
    gts: PerImage,
    layouts: Mapping[str, ChipLayout] | None = None,
    max_dets: int = 100,
) -> EvalReport:
    table = ap_table(dets, gts, IOU_THRESHOLDS, AREA_RANGES["all"], max_dets)
    ap_s, ap_m, ap_l = size_bucketed_ap(dets, gts, max_dets)
    return EvalReport(
        AP=_mean_or_none(table),
        AP50=_mean_or_none(table[:1]),
        AP75=_mean_or_none(table[5:6]),
        AP_s=ap_s,
        AP_m=ap_m,
        AP_l=ap_l,
        recall_rate=recall_rate(layouts, gts) if layouts is not None else None,
    )


@dataclass(frozen=True)
class SizeStats:
    """Per-object scale statistics.

    Absolute size is ``sqrt(w*h)`` in px, relative size is that divided by
    ``sqrt(W*H)`` of the image, aspect is ``w/h``. Standard deviations are
    population (ddof=0).
    """

    as_mean: float
    as_std: float
    rs_mean: float
    rs_std: float
    aspect_mean: float
    aspect_std: float
    frac_s: float
    frac_m: float
    frac_l: float
    count: int

    def to_dict(self) -> dict:
        return asdict(self)


def dataset_stats(gts: PerImage, dims: Mapping[str, ImageDims]) -> SizeStats:
    side, rel, aspect, areas = [], [], [], []
    for img, boxes in gts.items():
        d = dims[img]
        for g in boxes:
            a = g.box.area
            areas.append(a)
            side.append(math.sqrt(a))
            rel.append(math.sqrt(a / d.area))
            aspect.append(g.box.w / g.box.h)
    if not areas:
        raise ValueError("dataset_stats needs at least one object")
    areas_np = np.array(areas)
    n = len(areas)

    def frac(name: str) -> float:
        lo, hi = AREA_RANGES[name]
        return float(np.count_nonzero((areas_np >= lo) & (areas_np < hi)) / n)

    return SizeStats(
        as_mean=float(np.mean(side)),
        as_std=float(np.std(side)),
        rs_mean=float(np.mean(rel)),
        rs_std=float(np.std(rel)),
        aspect_mean=float(np.mean(aspect)),
        aspect_std=float(np.std(aspect)),
        frac_s=frac("small"),
        frac_m=frac("medium"),
        frac_l=frac("large"),
        count=n,
    )
