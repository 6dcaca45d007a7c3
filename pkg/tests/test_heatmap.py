import math

import numpy as np
import pytest

from c2fdet.geom import Box, ImageDims
from c2fdet.heatmap import (
    GaussianParams,
    Heatmap,
    NoPositivesError,
    build_target,
    center_cell,
    decode_centers,
    focal_loss,
    gaussian_sigmas,
    heatmap_shape,
    is_small_object,
    load_heatmap,
    save_heatmap,
)

from oracles import naive_focal


def random_scene(rng, dims, n, min_side=8, max_side=60):
    out = []
    for _ in range(n):
        w, h = rng.uniform(min_side, max_side, 2)
        x = rng.uniform(0, dims.W - w)
        y = rng.uniform(0, dims.H - h)
        out.append(Box(float(x), float(y), float(w), float(h)))
    return out


def test_shape_uses_ceiling():
    assert heatmap_shape(ImageDims(101, 99), 4) == (26, 25)
    assert Heatmap.zeros(ImageDims(8, 8), 4).values.shape == (2, 2)


def test_sigma_arithmetic():
    sx, sy = gaussian_sigmas(48, 48, 0.54)
    assert sx == pytest.approx(4.32) and sy == pytest.approx(4.32)


def test_center_cell_is_exactly_one():
    dims = ImageDims(200, 120)
    box = Box(50, 30, 40, 20)
    hm = build_target([box], dims, 4)
    cx, cy = center_cell(box, 4, heatmap_shape(dims, 4))
    assert (cx, cy) == (17, 10)
    assert hm.values[cy, cx] == 1.0
    assert hm.values.max() == 1.0


def test_tiny_box_still_has_its_peak():
    hm = build_target([Box(10.2, 10.2, 0.5, 0.5)], ImageDims(64, 64), 4)
    assert hm.values[2, 2] == 1.0


def test_overlapping_objects_take_elementwise_max():
    dims = ImageDims(160, 160)
    a, b = Box(40, 40, 50, 60), Box(60, 50, 40, 40)
    both = build_target([a, b], dims, 4).values
    single = np.maximum(build_target([a], dims, 4).values, build_target([b], dims, 4).values)
    np.testing.assert_array_equal(both, single)


def test_target_range_and_peak_count(rng):
    dims = ImageDims(320, 240)
    for _ in range(20):
        boxes = random_scene(rng, dims, 6)
        hm = build_target(boxes, dims, 4).values
        assert hm.min() >= 0.0 and hm.max() <= 1.0
        cells = {center_cell(b, 4, heatmap_shape(dims, 4)) for b in boxes}
        if len(cells) == len(boxes):
            assert np.count_nonzero(hm == 1.0) == len(boxes)


def test_monotone_decay_through_center():
    dims = ImageDims(256, 256)
    box = Box(100, 90, 44, 70)
    hm = build_target([box], dims, 4).values
    cx, cy = center_cell(box, 4, heatmap_shape(dims, 4))
    row, col = hm[cy], hm[:, cx]
    assert np.all(np.diff(row[cx:]) <= 0) and np.all(np.diff(row[: cx + 1]) >= 0)
    assert np.all(np.diff(col[cy:]) <= 0) and np.all(np.diff(col[: cy + 1]) >= 0)


def test_small_object_predicate():
    assert is_small_object(Box(0, 0, 95, 95))
    assert not is_small_object(Box(0, 0, 96, 20))


def test_focal_single_positive_pixel():
    loss = focal_loss(Heatmap(np.array([[0.5]]), 1), Heatmap(np.array([[1.0]]), 1), 1)
    assert loss == pytest.approx(0.25 * math.log(2), abs=1e-12)
    assert loss == pytest.approx(0.17329, abs=1e-5)


def test_focal_near_perfect_prediction():
    target = np.zeros((20, 30))
    target[[3, 10, 15], [4, 20, 7]] = 1.0
    pred = np.where(target == 1.0, 1 - 1e-6, 0.0)
    assert focal_loss(Heatmap(pred, 4), Heatmap(target, 4), 3) < 1e-4


def test_focal_matches_naive_loop(rng):
    for _ in range(20):
        h, w = rng.integers(3, 25, size=2)
        target = rng.uniform(0, 1, (h, w))
        target[rng.uniform(size=(h, w)) < 0.1] = 1.0
        pred = rng.uniform(0, 1, (h, w))
        m = int(rng.integers(1, 10))
        got = focal_loss(Heatmap(pred, 4), Heatmap(target, 4), m)
        want = naive_focal(pred, target, m)
        assert got == pytest.approx(want, rel=1e-6)


def test_focal_needs_positives_and_matching_shapes():
    hm = Heatmap(np.zeros((2, 2)), 4)
    with pytest.raises(NoPositivesError):
        focal_loss(hm, hm, 0)
    with pytest.raises(ValueError):
        focal_loss(hm, Heatmap(np.zeros((3, 2)), 4), 1)


def test_clamped_target_beats_perturbation_on_binary_cells(rng):
    dims = ImageDims(320, 240)
    boxes = random_scene(rng, dims, 4)
    target = build_target(boxes, dims, 4)
    base_pred = np.clip(target.values, 1e-6, 1 - 1e-6)
    base = focal_loss(Heatmap(base_pred, 4), target, 4)
    binary = np.argwhere((target.values < 1e-9) | (target.values == 1.0))
    for y, x in binary[rng.choice(len(binary), 200, replace=False)]:
        pred = base_pred.copy()
        pred[y, x] += -0.2 if target.values[y, x] == 1.0 else 0.2
        assert focal_loss(Heatmap(pred, 4), target, 4) > base


def test_skirt_cells_prefer_lower_prediction():
    # inside the Gaussian skirt the negative term is minimised at 0, not at H
    target = Heatmap(np.array([[1.0, 0.5]]), 4)
    at_target = focal_loss(Heatmap(np.array([[1.0, 0.5]]), 4), target, 1)
    lowered = focal_loss(Heatmap(np.array([[1.0, 0.3]]), 4), target, 1)
    assert lowered < at_target


def test_decode_single_object_round_trip():
    dims = ImageDims(200, 200)
    box = Box(70, 40, 30, 60)
    centers = decode_centers(build_target([box], dims, 4), 0.10)
    assert len(centers) == 1
    assert abs(centers[0].x - box.cx) <= 4 and abs(centers[0].y - box.cy) <= 4
    assert centers[0].score == 1.0


def test_decode_below_threshold_is_empty():
    assert decode_centers(Heatmap(np.full((30, 30), 0.05), 4), 0.10) == []


def test_decode_two_objects_100px_apart():
    dims = ImageDims(300, 200)
    boxes = [Box(50, 80, 24, 40), Box(150, 80, 24, 40)]
    centers = decode_centers(build_target(boxes, dims, 4), 0.10)
    assert len(centers) == 2
    xs = sorted(c.x for c in centers)
    assert xs[0] == pytest.approx(62, abs=4) and xs[1] == pytest.approx(162, abs=4)


def test_decode_plateau_keeps_first_cell_row_major():
    v = np.zeros((5, 5))
    v[2, 2] = v[2, 3] = v[3, 2] = 0.8
    centers = decode_centers(Heatmap(v, 1), 0.1)
    assert [(c.x, c.y) for c in centers] == [(2.5, 2.5)]


def test_decode_sorted_by_score_and_mapped_to_image_frame():
    v = np.zeros((10, 10))
    v[1, 1], v[8, 8] = 0.3, 0.9
    centers = decode_centers(Heatmap(v, 4), 0.1)
    assert [c.score for c in centers] == pytest.approx([0.9, 0.3])
    assert (centers[0].x, centers[0].y) == (34.0, 34.0)


def test_decode_window_validation():
    hm = Heatmap(np.zeros((4, 4)), 4)
    for bad in (1, 2, 4):
        with pytest.raises(ValueError):
            decode_centers(hm, 0.1, bad)


def test_decode_recovers_well_separated_scenes(rng):
    r = 4
    dims = ImageDims(400, 300)
    for _ in range(100):
        boxes = []
        while len(boxes) < 5:
            w, h = rng.uniform(2 * r, 40, 2)
            b = Box(float(rng.uniform(0, dims.W - w)), float(rng.uniform(0, dims.H - h)), float(w), float(h))
            if all(math.hypot(b.cx - o.cx, b.cy - o.cy) >= 4 * r for o in boxes):
                boxes.append(b)
        centers = decode_centers(build_target(boxes, dims, r), 0.10)
        assert len(centers) == len(boxes)
        for b in boxes:
            assert min(max(abs(c.x - b.cx), abs(c.y - b.cy)) for c in centers) <= r


def test_heatmap_file_round_trip(tmp_path):
    v = np.random.default_rng(0).uniform(size=(7, 9)).astype(np.float32)
    save_heatmap(Heatmap(v.astype(np.float64), 4), tmp_path / "img0.raw")
    raw = (tmp_path / "img0.raw").read_bytes()
    assert raw == v.astype("<f4").tobytes()
    assert (tmp_path / "img0.json").is_file()
    back = load_heatmap(tmp_path / "img0.json")
    assert back.stride == 4 and back.values.shape == (7, 9)
    np.testing.assert_array_equal(back.values, v.astype(np.float64))


def test_heatmap_size_mismatch_is_reported(tmp_path):
    save_heatmap(Heatmap(np.zeros((3, 3)), 2), tmp_path / "a.raw")
    (tmp_path / "a.raw").write_bytes(b"\0" * 8)
    with pytest.raises(ValueError, match="expected 9 floats"):
        load_heatmap(tmp_path / "a.raw")


def test_gaussian_params_validation():
    with pytest.raises(ValueError):
        GaussianParams(beta=0)
    with pytest.raises(ValueError):
        GaussianParams(alpha_f=-1)
