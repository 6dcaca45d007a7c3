"""Command line front end: one subcommand per pipeline stage.

Every stage reads and writes plain files (JSON, PNG, raw heatmaps), so a run
can be resumed from any checkpoint. Exit codes: 0 success, 2 malformed
input, 3 file system or external-process failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from PIL import Image, ImageDraw

from .bench import run_bench
from .chips import render_chip, transfer_ground_truth
from .config import PROFILES, PipelineConfig, load_config
from .estimators import ChipRequest, chipper_from_config
from .evaluation import dataset_stats, evaluate
from .formats import (
    SchemaError,
    centers_to_records,
    chip_image_name,
    detections_to_records,
    dump_json,
    ground_truth_dict,
    manifest_path,
    read_centers,
    read_detections,
    read_ground_truth,
    read_json,
    read_manifest,
    split_chip_image_id,
    write_json,
    write_manifest,
)
from .fusion import fuse_image
from .geom import ImageDims
from .heatmap import build_target, decode_centers, is_small_object, load_heatmap, save_heatmap
from .proposal import Detection, to_original_frame
from .simkit import DetectorAdapter, DetectorError, DetectorOutputError, run_external_detector

EXIT_OK, EXIT_SCHEMA, EXIT_IO = 0, 2, 3

T = TypeVar("T")
R = TypeVar("R")


def _pmap(fn: Callable[[T], R], items: Iterable[T], jobs: int) -> list[R]:
    """Ordered map over a bounded thread pool (``jobs <= 1`` runs inline)."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _config(args) -> PipelineConfig:
    return load_config(args.config, args.profile, args.seed)


def _list_images(directory: str | Path) -> dict[str, Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"image directory not found: {d}")
    return {p.stem: p for p in sorted(d.glob("*.png"))}


def _load_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def _save_png(path: Path, pixels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    Image.fromarray(pixels).save(tmp, format="PNG")
    tmp.replace(path)


def _image_dims(path: Path) -> ImageDims:
    with Image.open(path) as im:
        return ImageDims(*im.size)


def scales_path(detections_path: str | Path) -> Path:
    """Sidecar recording the per-image downsample scale of a detection file."""
    p = Path(detections_path)
    return p.with_name(f"{p.stem}.scales.json")


def load_coarse(path: str | Path) -> dict[str, list[Detection]]:
    """Coarse detections in the original frame, undoing a recorded downsample."""
    dets = read_detections(path)
    sidecar = scales_path(path)
    if not sidecar.is_file():
        return dets
    scales = read_json(sidecar)
    if not isinstance(scales, dict):
        raise SchemaError(f"{sidecar}: expected an object of image_id -> scale")
    return {img: to_original_frame(d, float(scales.get(img, 1.0))) for img, d in dets.items()}


# --- stages ---------------------------------------------------------------


def cmd_gen_targets(args) -> int:
    cfg = _config(args)
    gts, dims = read_ground_truth(args.gt)
    out = Path(args.out)
    for img in sorted(dims):
        boxes = [g.box for g in gts[img] if args.all_objects or is_small_object(g.box)]
        save_heatmap(build_target(boxes, dims[img], cfg.stride), out / f"{img}.raw")
    print(f"wrote {len(dims)} target heatmaps to {out}")
    return EXIT_OK


def cmd_decode_centers(args) -> int:
    cfg = _config(args)
    threshold = cfg.center_threshold if args.threshold is None else args.threshold
    window = cfg.decode_window if args.window is None else args.window
    dims = read_ground_truth(args.gt)[1] if args.gt else {}
    if not Path(args.heatmaps).is_dir():
        raise FileNotFoundError(f"heatmap directory not found: {args.heatmaps}")
    sidecars = sorted(Path(args.heatmaps).glob("*.json"))
    centers = {}
    for meta in sidecars:
        hm = load_heatmap(meta)
        centers[meta.stem] = decode_centers(hm, threshold, window, dims.get(meta.stem))
    write_json(args.out, centers_to_records(centers))
    print(f"decoded {sum(map(len, centers.values()))} centers from {len(centers)} heatmaps")
    return EXIT_OK


def _make_chips_one(item, *, chipper, coarse, centers, gts, out, render):
    img, dims, path = item
    req = ChipRequest(dims, coarse.get(img, []), centers.get(img, []))
    regions = chipper.regions(req)
    layout = chipper.layout(req, regions)
    write_manifest(manifest_path(out, img), layout, img, dims)
    if render and layout.chip_count:
        pixels = _load_rgb(path)
        for k in range(layout.chip_count):
            _save_png(out / chip_image_name(img, k), render_chip(pixels, layout, k).pixels)
    moved = {}
    if gts is not None:
        for k, dets in transfer_ground_truth(gts.get(img, []), layout).items():
            moved[f"{img}_chip{k}"] = dets
    return layout.chip_count, moved


def cmd_make_chips(args) -> int:
    cfg = _config(args)
    coarse = load_coarse(args.coarse) if args.coarse else {}
    centers = read_centers(args.centers) if args.centers else {}
    gts, gt_dims = read_ground_truth(args.gt) if args.gt else (None, {})
    if args.images:
        paths = _list_images(args.images)
        items = [(img, _image_dims(p), p) for img, p in paths.items()]
    elif gt_dims:
        items = [(img, gt_dims[img], None) for img in sorted(gt_dims)]
    else:
        raise SchemaError("make-chips needs --images or --gt to know the image sizes")
    known = {img for img, _, _ in items}
    stray = sorted((set(coarse) | set(centers)) - known)
    if stray:
        raise SchemaError(f"detections or centers for unknown images: {stray[:5]}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chipper = chipper_from_config(cfg).fit()
    render = bool(args.images) and not args.no_render

    def one(item):
        return _make_chips_one(
            item, chipper=chipper, coarse=coarse, centers=centers, gts=gts, out=out, render=render
        )

    results = _pmap(one, items, args.jobs)
    total = sum(r[0] for r in results)
    if gts is not None:
        moved = {k: v for r in results for k, v in r[1].items()}
        chip_dims = {k: ImageDims(cfg.chip_size, cfg.chip_size) for k in moved}
        write_json(out / "chip_ground_truth.json", ground_truth_dict(moved, chip_dims))
    print(f"{total} chips for {len(items)} images")
    return EXIT_OK


def cmd_run_detector(args) -> int:
    cfg = _config(args)
    adapter = DetectorAdapter(args.mode, args.locator, args.timeout)
    paths = _list_images(args.images)
    work = None
    if args.downsample:
        work = Path(args.work) if args.work else Path(tempfile.mkdtemp(prefix="c2fdet-"))

    def one(item):
        img, path = item
        scale = 1.0
        if args.downsample:
            dims = _image_dims(path)
            scale = cfg.downsample_scale(dims)
            size = (max(1, round(dims.W * scale)), max(1, round(dims.H * scale)))
            with Image.open(path) as im:
                small = im.convert("RGB").resize(size, Image.BILINEAR)
            path = work / f"{img}.png"
            _save_png(path, np.asarray(small))
        return img, scale, run_external_detector(adapter, path, img)

    results = _pmap(one, sorted(paths.items()), args.jobs)
    dets = {img: d for img, _, d in results}
    write_json(args.out, detections_to_records(dets))
    if args.downsample:
        write_json(scales_path(args.out), {img: s for img, s, _ in results})
    print(f"{sum(map(len, dets.values()))} detections for {len(dets)} images")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _config(args)
    coarse = load_coarse(args.coarse) if args.coarse else {}
    fine_by_chip = read_detections(args.fine) if args.fine else {}
    if not Path(args.manifests).is_dir():
        raise FileNotFoundError(f"manifest directory not found: {args.manifests}")
    manifests = sorted(Path(args.manifests).glob("*.manifest.json"))
    layouts = {}
    for m in manifests:
        layout, img, dims = read_manifest(m)
        layouts[img] = (layout, dims)
    fine: dict[str, dict[int, list[Detection]]] = {img: {} for img in layouts}
    for chip_image, dets in fine_by_chip.items():
        img, k = split_chip_image_id(chip_image)
        if img not in layouts:
            raise SchemaError(f"fine detections for {chip_image!r} but no manifest for image {img!r}")
        if not 0 <= k < layouts[img][0].chip_count:
            raise SchemaError(f"unknown chip id {k} in {chip_image!r}: image {img!r} has {layouts[img][0].chip_count} chips")
        fine[img][k] = dets
    missing = sorted(set(coarse) - set(layouts))
    if missing:
        raise SchemaError(f"coarse detections for images without a manifest: {missing[:5]}")
    fcfg = cfg.fusion_config()
    final = {
        img: fuse_image(coarse.get(img, []), fine[img], layout, dims, fcfg)
        for img, (layout, dims) in sorted(layouts.items())
    }
    write_json(args.out, detections_to_records(final))
    print(f"{sum(map(len, final.values()))} fused detections for {len(final)} images")
    return EXIT_OK


def cmd_eval(args) -> int:
    dets = read_detections(args.dets)
    gts, _ = read_ground_truth(args.gt)
    layouts = None
    if args.manifests:
        layouts = {}
        for m in sorted(Path(args.manifests).glob("*.manifest.json")):
            layout, img, _ = read_manifest(m)
            layouts[img] = layout
    stray = sorted(set(dets) - set(gts))
    if stray:
        raise SchemaError(f"detections for images absent from ground truth: {stray[:5]}")
    report = evaluate(dets, gts, layouts)
    if args.out:
        write_json(args.out, report.to_dict())
    print(report.table())
    return EXIT_OK


def cmd_stats(args) -> int:
    gts, dims = read_ground_truth(args.gt)
    stats = dataset_stats(gts, dims)
    if args.out:
        write_json(args.out, stats.to_dict())
    sys.stdout.write(dump_json(stats.to_dict()))
    return EXIT_OK


def cmd_bench_synthetic(args) -> int:
    cfg = _config(args)
    bench, scenes, results = run_bench(cfg, args.scenes, cfg.seed)
    out = Path(args.out)
    ids = [f"scene{i:04d}" for i in range(len(scenes))]
    dims = {i: s.dims for i, s in zip(ids, scenes)}
    write_json(out / "ground_truth.json", ground_truth_dict({i: s.ground_truth() for i, s in zip(ids, scenes)}, dims))
    write_json(out / "coarse.json", detections_to_records({i: r.coarse for i, r in zip(ids, results)}))
    write_json(out / "centers.json", centers_to_records({i: r.centers for i, r in zip(ids, results)}))
    fine = {f"{i}_chip{k}": d for i, r in zip(ids, results) for k, d in r.fine.items()}
    write_json(out / "fine.json", detections_to_records(fine))
    write_json(out / "detections.json", detections_to_records({i: r.detections for i, r in zip(ids, results)}))
    for i, r in zip(ids, results):
        write_manifest(manifest_path(out / "manifests", i), r.layout, i, r.dims)
    write_json(out / "report.json", bench.to_dict())
    print("coarse only")
    print(bench.coarse.table())
    print("coarse-to-fine")
    print(bench.pipeline.table())
    print(f"chips/image {bench.mean_chips:.2f}  tiles/image {bench.tiles_per_image}")
    return EXIT_OK


def cmd_render_annotations(args) -> int:
    paths = _list_images(args.images)
    dets = read_detections(args.dets) if args.dets else {}
    gts = read_ground_truth(args.gt)[0] if args.gt else {}
    out = Path(args.out)

    def one(item):
        img, path = item
        with Image.open(path) as im:
            canvas = im.convert("RGB")
        draw = ImageDraw.Draw(canvas)
        for g in gts.get(img, []):
            draw.rectangle(g.box.xyxy(), outline=(0, 255, 0))
        for d in dets.get(img, []):
            if d.score >= args.min_score:
                draw.rectangle(d.box.xyxy(), outline=(255, 0, 0))
        _save_png(out / f"{img}.png", np.asarray(canvas))

    _pmap(one, sorted(paths.items()), args.jobs)
    print(f"rendered {len(paths)} images to {out}")
    return EXIT_OK


# --- argument parsing -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON (keys of PipelineConfig)")
    common.add_argument("--profile", choices=sorted(PROFILES), help="dataset profile (default citypersons-like)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads over images")

    parser = argparse.ArgumentParser(prog="c2fdet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-targets", parents=[common], help="Gaussian center heatmap targets from ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="output directory for <image_id>.raw/.json")
    p.add_argument("--all-objects", action="store_true", help="keep objects of 96x96 px and larger")
    p.set_defaults(func=cmd_gen_targets)

    p = sub.add_parser("decode-centers", parents=[common], help="center points from predicted heatmaps")
    p.add_argument("--heatmaps", required=True, help="directory of <image_id>.raw/.json")
    p.add_argument("--out", required=True)
    p.add_argument("--gt", help="ground truth file, used only for image sizes")
    p.add_argument("--threshold", type=float)
    p.add_argument("--window", type=int)
    p.set_defaults(func=cmd_decode_centers)

    p = sub.add_parser("make-chips", parents=[common], help="cluster regions, chip manifests and chip images")
    p.add_argument("--images", help="directory of <image_id>.png")
    p.add_argument("--coarse", help="coarse detections JSON")
    p.add_argument("--centers", help="center points JSON")
    p.add_argument("--gt", help="ground truth; also transferred into chip frames")
    p.add_argument("--out", required=True)
    p.add_argument("--no-render", action="store_true", help="write manifests only")
    p.set_defaults(func=cmd_make_chips)

    p = sub.add_parser("run-detector", parents=[common], help="collect detections from an external detector")
    p.add_argument("--images", required=True, help="directory of PNGs (full images or chips)")
    p.add_argument("--mode", choices=["directory", "subprocess"], required=True)
    p.add_argument("--locator", required=True, help="JSON directory, or command with an {image} placeholder")
    p.add_argument("--out", required=True)
    p.add_argument("--downsample", action="store_true", help="feed the coarse-size view and record the scale")
    p.add_argument("--work", help="where downsampled images are written")
    p.add_argument("--timeout", type=float)
    p.set_defaults(func=cmd_run_detector)

    p = sub.add_parser("fuse", parents=[common], help="remap chip detections and fuse with coarse ones")
    p.add_argument("--coarse")
    p.add_argument("--fine", help="detections with image_id <image_id>_chip<k>")
    p.add_argument("--manifests", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", parents=[common], help="COCO-style AP and chip recall rate")
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--manifests", help="chip manifests, enables recall_rate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", parents=[common], help="object size statistics of a ground truth file")
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bench-synthetic", parents=[common], help="coarse-only vs coarse-to-fine on synthetic scenes")
    p.add_argument("--scenes", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_synthetic)

    p = sub.add_parser("render-annotations", parents=[common], help="draw boxes on images for inspection")
    p.add_argument("--images", required=True)
    p.add_argument("--dets")
    p.add_argument("--gt")
    p.add_argument("--min-score", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_annotations)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, json.JSONDecodeError, DetectorOutputError, KeyError, ValueError) as exc:
        print(f"c2fdet {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (OSError, DetectorError) as exc:
        print(f"c2fdet {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
