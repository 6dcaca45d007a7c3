"""Synthetic scenes, a size-aware oracle detector, and external detector adapters.

The oracle stands in for a trained network: an object is found with a
probability that rises with its side length *as presented to the detector*.
Downsampling the image therefore hurts small objects while upsampled chips
help them, which is the effect the coarse-to-fine pipeline exploits.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .formats import SchemaError, detections_from_records
from .geom import Box, ImageDims, iou
from .proposal import Detection

FP_STREAM = 2**32 - 1


class SceneTooDenseError(RuntimeError):
    pass


@dataclass(frozen=True)
class LogNormalSize:
    """Object side ``sqrt(w*h)`` in px, log-normal around ``median``."""

    median: float = 20.0
    sigma: float = 0.6
    min_side: float = 4.0

    def sample(self, rng: np.random.Generator, n: int | None = None):
        s = rng.lognormal(math.log(self.median), self.sigma, size=n)
        return np.maximum(s, self.min_side)


@dataclass(frozen=True)
class SceneObject:
    box: Box
    category: int = 1
    obj_id: int = 0


@dataclass(frozen=True)
class SceneSpec:
    dims: ImageDims
    objects: tuple[SceneObject, ...] = ()
    seed: int = 0

    def ground_truth(self) -> list[Detection]:
        return [Detection(o.box, 1.0, o.category) for o in self.objects]


def generate_scene(
    n_objects: int,
    size_dist: LogNormalSize,
    dims: ImageDims,
    seed: int,
    *,
    aspect: float = 0.41,
    aspect_jitter: float = 0.15,
    max_iou: float = 0.3,
    max_tries: int = 2000,
    category: int = 1,
) -> SceneSpec:
    """Place ``n_objects`` boxes uniformly at random with limited overlap.

    ``aspect`` is the median ``w/h``; sizes come from ``size_dist``. Placement
    is rejection-sampled so that every pair has IoU below ``max_iou``.
    """
    if n_objects < 0:
        raise ValueError("n_objects must be >= 0")
    rng = np.random.default_rng(seed)
    placed: list[Box] = []
    tries = 0
    while len(placed) < n_objects:
        tries += 1
        if tries > max_tries * max(n_objects, 1):
            raise SceneTooDenseError(
                f"placed {len(placed)} of {n_objects} objects in {dims.W}x{dims.H} after {tries - 1} tries"
            )
        side = float(size_dist.sample(rng))
        a = aspect * math.exp(aspect_jitter * rng.standard_normal())
        w = min(side * math.sqrt(a), float(dims.W))
        h = min(side / math.sqrt(a), float(dims.H))
        x = rng.uniform(0.0, dims.W - w)
        y = rng.uniform(0.0, dims.H - h)
        box = Box(x, y, w, h)
        if any(iou(box, other) >= max_iou for other in placed):
            continue
        placed.append(box)
    objects = tuple(SceneObject(b, category, i) for i, b in enumerate(placed))
    return SceneSpec(dims, objects, seed)


def render_scene(scene: SceneSpec) -> np.ndarray:
    """RGB raster with one simple glyph per object (body plus darker head band)."""
    rng = np.random.default_rng([scene.seed, 7])
    H, W = scene.dims.H, scene.dims.W
    img = rng.normal(110.0, 12.0, size=(H, W, 3))
    for obj in scene.objects:
        b = obj.box
        x0, y0 = int(math.floor(b.x)), int(math.floor(b.y))
        x1, y1 = int(math.ceil(b.x2)), int(math.ceil(b.y2))
        color = rng.uniform(20, 235, size=3)
        img[y0:y1, x0:x1] = color
        head = y0 + max(1, (y1 - y0) // 4)
        img[y0:head, x0:x1] = color * 0.5
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class OracleParams:
    """Calibration of the oracle detector.

    ``size50`` is the presented side (px) detected half the time; a value of
    0 disables the size gate so every object is found. ``fp_rate`` counts false
    positives per megapixel of the presented view.
    """

    size50: float = 24.0
    slope: float = 0.25
    loc_noise: float = 0.05
    fp_rate: float = 1.0
    score_noise: float = 0.1
    fp_max_score: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.size50 < 0:
            raise ValueError("size50 must be >= 0")
        if self.fp_rate < 0:
            raise ValueError("fp_rate must be >= 0")


def detection_probability(side: float, params: OracleParams) -> float:
    if params.size50 == 0:
        return 1.0
    z = params.slope * (side - params.size50)
    return 1.0 / (1.0 + math.exp(-z)) if z > -700 else 0.0


def _key(params: OracleParams, view_id, stream: int) -> list[int]:
    view = list(view_id) if isinstance(view_id, tuple) else [view_id]
    return [params.seed, *view, stream]


def oracle_detect(
    scene: SceneSpec,
    view_scale: float,
    params: OracleParams,
    view_id: int | tuple[int, ...] = 0,
) -> list[Detection]:
    """Simulated detections in the scene's own frame.

    Outcomes come from random streams keyed by ``(seed, view_id, obj_id)``, so
    they do not depend on object order, and a larger ``view_scale`` can only
    turn a miss into a hit.
    """
    if view_scale <= 0:
        raise ValueError("view_scale must be > 0")
    out = []
    for obj in scene.objects:
        rng = np.random.default_rng(_key(params, view_id, obj.obj_id))
        u = rng.uniform()
        jitter = rng.standard_normal(4)
        noise = rng.standard_normal()
        b = obj.box
        p = detection_probability(math.sqrt(b.area) * view_scale, params)
        if u >= p:
            continue
        n = params.loc_noise
        cx = b.cx + jitter[0] * n * b.w
        cy = b.cy + jitter[1] * n * b.h
        w = b.w * math.exp(jitter[2] * n)
        h = b.h * math.exp(jitter[3] * n)
        score = min(max(p + params.score_noise * noise, 0.01), 1.0)
        out.append(Detection(Box.from_center(cx, cy, w, h), score, obj.category))
    out.extend(_false_positives(scene, view_scale, params, view_id))
    return out


def _false_positives(scene, view_scale, params, view_id) -> list[Detection]:
    if params.fp_rate == 0:
        return []
    rng = np.random.default_rng(_key(params, view_id, FP_STREAM))
    W, H = scene.dims.W, scene.dims.H
    mpx = W * H * view_scale * view_scale / 1e6
    out = []
    for _ in range(rng.poisson(params.fp_rate * mpx)):
        side = (params.size50 or 16.0) * rng.uniform(0.5, 2.0) / view_scale
        w, h = min(side * 0.6, W), min(side / 0.6, H)
        x, y = rng.uniform(0, W - w), rng.uniform(0, H - h)
        score = rng.uniform(0.0, params.fp_max_score)
        out.append(Detection(Box(x, y, w, h), float(score), 1))
    return out


class DetectorError(RuntimeError):
    pass


class DetectorMissingError(DetectorError, FileNotFoundError):
    def __init__(self, path) -> None:
        super().__init__(f"detector output not found: {path}")
        self.path = path


class DetectorExitError(DetectorError):
    def __init__(self, command, returncode: int, stderr: str = "") -> None:
        super().__init__(f"detector command {command!r} exited with code {returncode}: {stderr.strip()[:200]}")
        self.command = command
        self.returncode = returncode


class DetectorOutputError(DetectorError, ValueError):
    def __init__(self, source, byte_offset: int | None, reason: str) -> None:
        where = f" at byte {byte_offset}" if byte_offset is not None else ""
        super().__init__(f"malformed detections from {source}{where}: {reason}")
        self.source = source
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class DetectorAdapter:
    """How to obtain detections from a detector that lives outside this library.

    ``mode="directory"``: ``locator`` is a directory holding ``<image_id>.json``.
    ``mode="subprocess"``: ``locator`` is a command template whose ``{image}``
    placeholder is replaced by the image path; detections are read from stdout.
    """

    mode: str
    locator: str
    timeout: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("directory", "subprocess"):
            raise ValueError(f"unknown adapter mode {self.mode!r}")


def _parse_output(text: str, source) -> list[Detection]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise DetectorOutputError(source, offset, exc.msg) from exc
    try:
        per_image = detections_from_records(data)
    except SchemaError as exc:
        raise DetectorOutputError(source, None, str(exc)) from exc
    return [d for dets in per_image.values() for d in dets]


def run_external_detector(adapter: DetectorAdapter, image_path: str | Path, image_id: str) -> list[Detection]:
    if adapter.mode == "directory":
        path = Path(adapter.locator) / f"{image_id}.json"
        if not path.is_file():
            raise DetectorMissingError(path)
        return _parse_output(path.read_text(encoding="utf-8"), path)
    argv = [tok.replace("{image}", str(image_path)) for tok in shlex.split(adapter.locator)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=adapter.timeout, check=False)
    except FileNotFoundError as exc:
        raise DetectorMissingError(argv[0]) from exc
    if proc.returncode != 0:
        raise DetectorExitError(adapter.locator, proc.returncode, proc.stderr)
    return _parse_output(proc.stdout, " ".join(argv))


def scene_from_detections(dets: Sequence[Detection], dims: ImageDims, obj_ids: Sequence[int], seed: int = 0) -> SceneSpec:
    """Wrap already-transformed boxes (e.g. ground truth moved into a chip) as a scene."""
    objects = tuple(SceneObject(d.box, d.category, int(i)) for d, i in zip(dets, obj_ids))
    return SceneSpec(dims, objects, seed)


def downsample_scene(scene: SceneSpec, scale: float) -> SceneSpec:
    """The scene as seen in a uniformly rescaled view (boxes scaled, ids kept)."""
    W = max(1, int(round(scene.dims.W * scale)))
    H = max(1, int(round(scene.dims.H * scale)))
    objects = tuple(
        replace(o, box=Box(o.box.x * scale, o.box.y * scale, o.box.w * scale, o.box.h * scale))
        for o in scene.objects
    )
    return SceneSpec(ImageDims(W, H), objects, scene.seed)
