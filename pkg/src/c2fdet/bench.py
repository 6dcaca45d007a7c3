"""Desk-scale benchmark: coarse-only vs. the full pipeline on synthetic scenes."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .chips import transfer_ground_truth
from .config import PipelineConfig
from .estimators import CoarseToFineDetector, ImageResult, chipper_from_config, fuser_from_config
from .evaluation import EvalReport, evaluate
from .geom import ImageDims
from .heatmap import GaussianParams, Heatmap, heatmap_shape, object_kernel
from .proposal import Detection
from .simkit import (
    LogNormalSize,
    OracleParams,
    SceneObject,
    SceneSpec,
    downsample_scene,
    generate_scene,
    oracle_detect,
)

COARSE_VIEW, CENTER_VIEW, CHIP_VIEW = 0, 1, 2


@dataclass(frozen=True)
class BenchSettings:
    """Scene distribution and detector calibration for the benchmark.

    ``detector`` is used for both the coarse and the per-chip views, with
    ``size50`` measured in presented (view) pixels. ``localizer`` simulates
    the full-resolution center-localization network.
    """

    width: int = 2048
    height: int = 1024
    min_objects: int = 4
    max_objects: int = 12
    size: LogNormalSize = LogNormalSize(median=36.0, sigma=0.6, min_side=8.0)
    aspect: float = 0.41
    detector: OracleParams = OracleParams(size50=24.0, slope=0.25, loc_noise=0.05, fp_rate=1.0)
    localizer: OracleParams = OracleParams(size50=8.0, slope=0.5, loc_noise=0.05, fp_rate=1.0, fp_max_score=0.3)
    tile: int = 640
    tile_overlap: float = 0.2


def tile_count(dims: ImageDims, tile: int = 640, overlap: float = 0.2) -> int:
    """Tiles of an overlapping sliding-window partition (last tile shifted inward)."""
    step = tile * (1.0 - overlap)

    def axis(n: int) -> int:
        return 1 if n <= tile else math.ceil((n - tile) / step) + 1

    return axis(dims.W) * axis(dims.H)


def scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def make_scenes(n_scenes: int, seed: int, settings: BenchSettings) -> list[SceneSpec]:
    dims = ImageDims(settings.width, settings.height)
    rng = np.random.default_rng(seed)
    counts = rng.integers(settings.min_objects, settings.max_objects + 1, size=n_scenes)
    return [
        generate_scene(int(n), settings.size, dims, scene_seed(seed, i), aspect=settings.aspect)
        for i, n in enumerate(counts)
    ]


class OracleCoarse:
    def __init__(self, params: OracleParams):
        self.params = params

    def __call__(self, scene: SceneSpec, scale: float):
        view = downsample_scene(scene, scale)
        return oracle_detect(view, 1.0, self.params, view_id=(scene.seed, COARSE_VIEW))


class OracleLocalizer:
    """Predicted heatmap: each localized object leaves a Gaussian peaked at its score."""

    def __init__(self, params: OracleParams, stride: int = 4, gaussian: GaussianParams = GaussianParams()):
        self.params = params
        self.stride = stride
        self.gaussian = gaussian

    def __call__(self, scene: SceneSpec) -> Heatmap:
        shape = heatmap_shape(scene.dims, self.stride)
        values = np.zeros((shape[1], shape[0]))
        for det in oracle_detect(scene, 1.0, self.params, view_id=(scene.seed, CENTER_VIEW)):
            k = object_kernel(det.box, self.stride, shape, self.gaussian.beta) * det.score
            np.maximum(values, k, out=values)
        return Heatmap(values, self.stride)


class OracleFine:
    """Detector on a chip: sees ground truth that made it into the chip, scaled."""

    def __init__(self, params: OracleParams):
        self.params = params

    def __call__(self, scene: SceneSpec, layout, chip_id: int):
        objects = []
        for obj in scene.objects:
            moved = transfer_ground_truth([Detection(obj.box, 1.0, obj.category)], layout)
            objects.extend(SceneObject(d.box, d.category, obj.obj_id) for d in moved.get(chip_id, []))
        chip = SceneSpec(ImageDims(layout.chip_size, layout.chip_size), tuple(objects), scene.seed)
        return oracle_detect(chip, 1.0, self.params, view_id=(scene.seed, CHIP_VIEW, chip_id))


def build_detector(cfg: PipelineConfig, settings: BenchSettings) -> CoarseToFineDetector:
    return CoarseToFineDetector(
        coarse_detector=OracleCoarse(replace(settings.detector, seed=cfg.seed)),
        fine_detector=OracleFine(replace(settings.detector, seed=cfg.seed)),
        center_localizer=OracleLocalizer(replace(settings.localizer, seed=cfg.seed), cfg.stride),
        coarse_size=cfg.coarse_size,
        chipper=chipper_from_config(cfg),
        fuser=fuser_from_config(cfg),
        decode_window=cfg.decode_window,
    ).fit()


@dataclass
class BenchResult:
    coarse: EvalReport
    pipeline: EvalReport
    n_scenes: int
    n_objects: int
    mean_chips: float
    tiles_per_image: int
    settings: dict = field(default_factory=dict)

    def deltas(self) -> dict:
        out = {}
        for k, v in self.pipeline.to_dict().items():
            base = self.coarse.to_dict()[k]
            out[k] = None if v is None or base is None else v - base
        return out

    def to_dict(self) -> dict:
        return {
            "coarse_only": self.coarse.to_dict(),
            "pipeline": self.pipeline.to_dict(),
            "delta": self.deltas(),
            "n_scenes": self.n_scenes,
            "n_objects": self.n_objects,
            "mean_chips_per_image": self.mean_chips,
            "tiles_per_image": self.tiles_per_image,
            "settings": self.settings,
        }


def run_bench(
    cfg: PipelineConfig, n_scenes: int, seed: int, settings: BenchSettings | None = None
) -> tuple[BenchResult, list[SceneSpec], list[ImageResult]]:
    settings = settings or BenchSettings()
    scenes = make_scenes(n_scenes, seed, settings)
    detector = build_detector(replace(cfg, seed=seed), settings)
    results = detector.run(scenes)
    ids = [f"scene{i:04d}" for i in range(n_scenes)]
    gts = {i: s.ground_truth() for i, s in zip(ids, scenes)}
    coarse = {i: r.coarse for i, r in zip(ids, results)}
    final = {i: r.detections for i, r in zip(ids, results)}
    layouts = {i: r.layout for i, r in zip(ids, results)}
    dims = ImageDims(settings.width, settings.height)
    bench = BenchResult(
        coarse=evaluate(coarse, gts),
        pipeline=evaluate(final, gts, layouts),
        n_scenes=n_scenes,
        n_objects=sum(len(s.objects) for s in scenes),
        mean_chips=float(np.mean([r.layout.chip_count for r in results])) if results else 0.0,
        tiles_per_image=tile_count(dims, settings.tile, settings.tile_overlap),
        settings={"profile": cfg.profile, "seed": seed, **asdict(settings)},
    )
    return bench, scenes, results
