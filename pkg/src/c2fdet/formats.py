"""JSON formats shared by the CLI and external detectors.

Detections use the COCO result layout::

    [{"image_id": "img0", "bbox": [x, y, w, h], "score": 0.9, "category_id": 1}, ...]

Ground truth is ``{"images": [{"image_id", "width", "height"}], "annotations": [...]}``
where annotations follow the detection layout (``score`` optional).
"""

from __future__ import annotations

import json
import os
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .chips import ChipLayout
from .geom import Box, ImageDims
from .heatmap import CenterPoint
from .proposal import Detection


class SchemaError(ValueError):
    """Input parsed as JSON but does not follow the expected layout."""


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    atomic_write_text(path, dump_json(obj))


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def detection_record(image_id: str, det: Detection) -> dict[str, Any]:
    return {
        "image_id": image_id,
        "bbox": det.box.as_list(),
        "score": det.score,
        "category_id": det.category,
    }


def parse_detection(rec: Mapping[str, Any], default_score: float | None = None) -> Detection:
    try:
        bbox = [float(v) for v in rec["bbox"]]
        if len(bbox) != 4:
            raise SchemaError(f"bbox must have 4 numbers, got {rec['bbox']!r}")
        score = rec.get("score", default_score)
        if score is None:
            raise SchemaError("detection record without score")
        return Detection(Box(*bbox), float(score), int(rec.get("category_id", 1)))
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad detection record {rec!r}: {exc}") from exc


def detections_from_records(
    records: Any, default_score: float | None = None
) -> dict[str, list[Detection]]:
    if not isinstance(records, list):
        raise SchemaError("detection file must hold a JSON array")
    out: dict[str, list[Detection]] = defaultdict(list)
    for rec in records:
        if not isinstance(rec, Mapping):
            raise SchemaError(f"detection record must be an object, got {rec!r}")
        out[str(rec.get("image_id", ""))].append(parse_detection(rec, default_score))
    return dict(out)


def detections_to_records(dets: Mapping[str, Sequence[Detection]]) -> list[dict[str, Any]]:
    return [detection_record(img, d) for img in sorted(dets) for d in dets[img]]


def read_detections(path: str | Path) -> dict[str, list[Detection]]:
    return detections_from_records(read_json(path))


def write_detections(path: str | Path, dets: Mapping[str, Sequence[Detection]]) -> None:
    write_json(path, detections_to_records(dets))


def read_ground_truth(path: str | Path) -> tuple[dict[str, list[Detection]], dict[str, ImageDims]]:
    data = read_json(path)
    try:
        dims = {
            str(im["image_id"]): ImageDims(int(im["width"]), int(im["height"]))
            for im in data["images"]
        }
        anns = detections_from_records(data["annotations"], default_score=1.0)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: ground truth needs 'images' and 'annotations': {exc}") from exc
    unknown = set(anns) - set(dims)
    if unknown:
        raise SchemaError(f"{path}: annotations for images without dims: {sorted(unknown)}")
    return {img: anns.get(img, []) for img in dims}, dims


def ground_truth_dict(gts: Mapping[str, Sequence[Detection]], dims: Mapping[str, ImageDims]) -> dict:
    return {
        "images": [{"image_id": i, "width": dims[i].W, "height": dims[i].H} for i in sorted(dims)],
        "annotations": [
            {"image_id": i, "bbox": d.box.as_list(), "category_id": d.category}
            for i in sorted(gts)
            for d in gts[i]
        ],
    }


def read_centers(path: str | Path) -> dict[str, list[CenterPoint]]:
    out: dict[str, list[CenterPoint]] = defaultdict(list)
    data = read_json(path)
    if not isinstance(data, list):
        raise SchemaError("center file must hold a JSON array")
    for rec in data:
        try:
            out[str(rec["image_id"])].append(
                CenterPoint(float(rec["x"]), float(rec["y"]), float(rec["score"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad center record {rec!r}") from exc
    return dict(out)


def centers_to_records(centers: Mapping[str, Iterable[CenterPoint]]) -> list[dict[str, Any]]:
    return [
        {"image_id": img, "x": c.x, "y": c.y, "score": c.score}
        for img in sorted(centers)
        for c in centers[img]
    ]


def manifest_path(out_dir: str | Path, image_id: str) -> Path:
    return Path(out_dir) / f"{image_id}.manifest.json"


def chip_image_name(image_id: str, chip_id: int) -> str:
    return f"{image_id}_chip{chip_id}.png"


def split_chip_image_id(chip_image_id: str) -> tuple[str, int]:
    """``"scene3_chip2"`` -> ``("scene3", 2)``."""
    stem = chip_image_id[:-4] if chip_image_id.endswith(".png") else chip_image_id
    base, sep, k = stem.rpartition("_chip")
    if not sep or not k.isdigit():
        raise SchemaError(f"not a chip image id: {chip_image_id!r}")
    return base, int(k)


def write_manifest(path: str | Path, layout: ChipLayout, image_id: str, dims: ImageDims) -> None:
    data = layout.to_dict()
    data["image_id"] = image_id
    data["width"], data["height"] = dims.W, dims.H
    write_json(path, data)


def read_manifest(path: str | Path) -> tuple[ChipLayout, str, ImageDims]:
    data = read_json(path)
    try:
        return (
            ChipLayout.from_dict(data),
            str(data["image_id"]),
            ImageDims(int(data["width"]), int(data["height"])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed chip manifest: {exc}") from exc
