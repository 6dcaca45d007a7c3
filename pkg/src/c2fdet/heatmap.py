"""Center-localization heatmaps: Gaussian targets, focal loss, peak decoding.

Only the non-neural parts live here. A predicted heatmap comes from any
external network and is exchanged through :func:`save_heatmap` /
:func:`load_heatmap` (raw little-endian float32 plus a JSON sidecar).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geom import Box, ImageDims

SMALL_OBJECT_LIMIT = 96
PROB_EPS = 1e-6


class NoPositivesError(ValueError):
    """Raised by :func:`focal_loss` when the image has no annotated objects."""


@dataclass(frozen=True)
class GaussianParams:
    beta: float = 0.54
    alpha_f: float = 2.0
    beta_f: float = 4.0

    def __post_init__(self) -> None:
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.alpha_f < 0 or self.beta_f < 0:
            raise ValueError("focal exponents must be non-negative")


@dataclass(frozen=True)
class CenterPoint:
    x: float
    y: float
    score: float


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Row-major raster of shape ``(height, width)`` at an integer stride."""

    values: np.ndarray
    stride: int

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValueError("heatmap values must be 2-D")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def zeros(cls, dims: ImageDims, stride: int) -> "Heatmap":
        w, h = heatmap_shape(dims, stride)
        return cls(np.zeros((h, w), dtype=np.float64), stride)


def heatmap_shape(dims: ImageDims, stride: int) -> tuple[int, int]:
    """``(width, height)`` of the raster; ceil so border pixels keep coverage."""
    return -(-dims.W // stride), -(-dims.H // stride)


def is_small_object(box: Box, limit: float = SMALL_OBJECT_LIMIT) -> bool:
    """Training filter for the center localizer: both sides under ``limit`` px."""
    return box.w < limit and box.h < limit


def gaussian_sigmas(w_b: float, h_b: float, beta: float) -> tuple[float, float]:
    return beta * w_b / 6.0, beta * h_b / 6.0


def center_cell(box: Box, stride: int, shape: tuple[int, int]) -> tuple[int, int]:
    width, height = shape
    cx = min(max(int(math.floor(box.cx / stride)), 0), width - 1)
    cy = min(max(int(math.floor(box.cy / stride)), 0), height - 1)
    return cx, cy


def object_kernel(box: Box, stride: int, shape: tuple[int, int], beta: float) -> np.ndarray:
    """Gaussian of one object on the feature grid, peak 1 at its center cell.

    Sigmas are computed from the box size mapped to feature-map scale.
    """
    width, height = shape
    cx, cy = center_cell(box, stride, shape)
    sx, sy = gaussian_sigmas(box.w / stride, box.h / stride, beta)
    gx = np.exp(-((np.arange(width) - cx) ** 2) / (2.0 * sx * sx))
    gy = np.exp(-((np.arange(height) - cy) ** 2) / (2.0 * sy * sy))
    return np.outer(gy, gx)


def build_target(
    boxes: Sequence[Box],
    dims: ImageDims,
    stride: int = 4,
    params: GaussianParams | None = None,
) -> Heatmap:
    params = params or GaussianParams()
    shape = heatmap_shape(dims, stride)
    out = np.zeros((shape[1], shape[0]), dtype=np.float64)
    for box in boxes:
        np.maximum(out, object_kernel(box, stride, shape, params.beta), out=out)
    return Heatmap(out, stride)


def focal_loss(
    pred: Heatmap,
    target: Heatmap,
    n_objects: int,
    params: GaussianParams | None = None,
) -> float:
    """Penalty-reduced pixel focal loss, normalised by the object count."""
    params = params or GaussianParams()
    if n_objects < 1:
        raise NoPositivesError("focal loss needs at least one annotated object")
    if pred.values.shape != target.values.shape:
        raise ValueError(
            f"pred shape {pred.values.shape} != target shape {target.values.shape}"
        )
    p = np.clip(pred.values.astype(np.float64), PROB_EPS, 1.0 - PROB_EPS)
    h = target.values.astype(np.float64)
    pos = h == 1.0
    pos_loss = np.power(1.0 - p[pos], params.alpha_f) * np.log(p[pos])
    neg = ~pos
    neg_loss = (
        np.power(1.0 - h[neg], params.beta_f)
        * np.power(p[neg], params.alpha_f)
        * np.log(1.0 - p[neg])
    )
    return float(-(pos_loss.sum() + neg_loss.sum()) / n_objects)


def _local_peaks(values: np.ndarray, window: int) -> np.ndarray:
    """Cells that are the maximum of their window.

    A tie with an earlier (row-major) neighbour defeats the later cell, so a
    plateau reports only its first cell.
    """
    k = window // 2
    h, w = values.shape
    padded = np.pad(values, k, mode="constant", constant_values=-np.inf)
    peak = np.ones_like(values, dtype=bool)
    for dy in range(-k, k + 1):
        for dx in range(-k, k + 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[k + dy : k + dy + h, k + dx : k + dx + w]
            if (dy, dx) < (0, 0):
                peak &= values > nb
            else:
                peak &= values >= nb
    return peak


def decode_centers(
    pred: Heatmap,
    threshold: float = 0.10,
    window: int = 3,
    dims: ImageDims | None = None,
) -> list[CenterPoint]:
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    values = pred.values
    keep = _local_peaks(values, window) & (values >= threshold)
    ys, xs = np.nonzero(keep)
    scores = values[ys, xs]
    order = np.argsort(-scores, kind="stable")
    r = pred.stride
    out = []
    for i in order:
        x = xs[i] * r + r / 2.0
        y = ys[i] * r + r / 2.0
        if dims is not None:
            x, y = min(x, float(dims.W)), min(y, float(dims.H))
        out.append(CenterPoint(float(x), float(y), float(min(max(scores[i], 0.0), 1.0))))
    return out


def save_heatmap(hm: Heatmap, path: str | Path) -> None:
    """Write ``<base>.raw`` (little-endian float32, row-major) and ``<base>.json``."""
    base = Path(path).with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    meta = {"width": hm.width, "height": hm.height, "stride": hm.stride}
    _replace_bytes(base.with_suffix(".raw"), hm.values.astype("<f4").tobytes())
    _replace_bytes(base.with_suffix(".json"), json.dumps(meta, sort_keys=True).encode("utf-8"))


def _replace_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def load_heatmap(path: str | Path) -> Heatmap:
    base = Path(path).with_suffix("")
    meta = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    width, height, stride = int(meta["width"]), int(meta["height"]), int(meta["stride"])
    raw = np.fromfile(base.with_suffix(".raw"), dtype="<f4")
    if raw.size != width * height:
        raise ValueError(
            f"{base.with_suffix('.raw')}: expected {width * height} floats, found {raw.size}"
        )
    return Heatmap(raw.reshape(height, width).astype(np.float64), stride)
