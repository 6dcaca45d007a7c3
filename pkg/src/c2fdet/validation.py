"""Input coercion for the estimator API, in the spirit of ``sklearn.utils.check_array``."""

from __future__ import annotations

from typing import Any, Iterable

import numpy as np

from .geom import Box, ImageDims
from .heatmap import CenterPoint
from .proposal import Detection


def check_detections(dets: Any, name: str = "detections") -> list[Detection]:
    """Accept Detection objects or an ``(n, 5)``/``(n, 6)`` array of
    ``x, y, w, h, score[, category]`` rows."""
    if dets is None:
        return []
    if isinstance(dets, np.ndarray):
        if dets.size == 0:
            return []
        if dets.ndim != 2 or dets.shape[1] not in (5, 6):
            raise ValueError(f"{name}: expected an (n, 5) or (n, 6) array, got shape {dets.shape}")
        if not np.all(np.isfinite(dets)):
            raise ValueError(f"{name}: array contains NaN or inf")
        cat = dets[:, 5].astype(int) if dets.shape[1] == 6 else np.ones(len(dets), dtype=int)
        return [Detection(Box(*map(float, row[:4])), float(row[4]), int(c)) for row, c in zip(dets, cat)]
    out = list(dets)
    for d in out:
        if not isinstance(d, Detection):
            raise TypeError(f"{name}: expected Detection items, got {type(d).__name__}")
    return out


def check_centers(centers: Any) -> list[CenterPoint]:
    if centers is None:
        return []
    if isinstance(centers, np.ndarray):
        if centers.size == 0:
            return []
        if centers.ndim != 2 or centers.shape[1] != 3:
            raise ValueError(f"centers: expected an (n, 3) array of x, y, score, got {centers.shape}")
        return [CenterPoint(float(x), float(y), float(s)) for x, y, s in centers]
    return list(centers)


def check_dims(x: Any) -> ImageDims:
    """Image dims from an ImageDims, a ``(W, H)`` pair, an array or an object with ``.dims``."""
    if isinstance(x, ImageDims):
        return x
    if hasattr(x, "dims") and isinstance(x.dims, ImageDims):
        return x.dims
    if isinstance(x, np.ndarray):
        if x.ndim not in (2, 3):
            raise ValueError(f"image array must be 2-D or 3-D, got shape {x.shape}")
        return ImageDims(int(x.shape[1]), int(x.shape[0]))
    if isinstance(x, Iterable):
        w, h = x
        return ImageDims(int(w), int(h))
    raise TypeError(f"cannot infer image dims from {type(x).__name__}")
