import numpy as np
import pytest

from c2fdet.chips import ChipLayout, Placement, plan_chips, transfer_ground_truth
from c2fdet.fusion import (
    FusionConfig,
    UnknownChipError,
    filter_boundary,
    fuse,
    fuse_image,
    nms,
    remap_detections,
)
from c2fdet.geom import Box, ImageDims, intersection, iou
from c2fdet.proposal import Detection

from oracles import nms_reference


def d(x, y, w, h, s=0.5, c=1):
    return Detection(Box(x, y, w, h), s, c)


def one_chip(src, dst, scale):
    return ChipLayout(640, 4, 160, (Placement(0, src, dst, scale, 0),), 1)


def random_dets(rng, n, span=400, cats=1):
    out = []
    for _ in range(n):
        w, h = rng.uniform(5, 80, 2)
        x, y = rng.uniform(0, span, 2)
        out.append(d(float(x), float(y), float(w), float(h), float(rng.uniform()), int(rng.integers(1, cats + 1))))
    return out


def test_remap_dst_box_maps_to_src():
    layout = one_chip(Box(300, 200, 80, 80), Box(10, 0, 160, 160), 2.0)
    (out,) = remap_detections({0: [d(10, 0, 160, 160, 0.7, 3)]}, layout)
    assert out.box.as_list() == pytest.approx([300, 200, 80, 80])
    assert out.score == 0.7 and out.category == 3


def test_remap_analytic_inverse():
    layout = one_chip(Box(100, 100, 80, 80), Box(0, 0, 160, 160), 2.0)
    (out,) = remap_detections({0: [d(10, 10, 20, 20)]}, layout)
    assert out.box == Box(105, 105, 10, 10)


def test_remap_drops_centers_in_fill_area():
    layout = one_chip(Box(0, 0, 80, 80), Box(0, 0, 160, 160), 2.0)
    assert remap_detections({0: [d(300, 300, 20, 20)]}, layout) == []


def test_unknown_chip_is_reported():
    layout = one_chip(Box(0, 0, 80, 80), Box(0, 0, 160, 160), 2.0)
    with pytest.raises(UnknownChipError, match="unknown chip id 5"):
        remap_detections({5: [d(0, 0, 5, 5)]}, layout)


def test_boundary_rules():
    dims = ImageDims(1000, 800)
    at_border = one_chip(Box(0, 100, 80, 80), Box(0, 0, 160, 160), 2.0)
    interior = one_chip(Box(300, 100, 80, 80), Box(0, 0, 160, 160), 2.0)
    flush_left = d(0, 40, 30, 60)
    flush_right = d(130, 40, 30, 60)
    inside = d(40, 40, 30, 60)
    assert filter_boundary({0: [flush_left]}, at_border, dims)[0] == [flush_left]
    assert filter_boundary({0: [flush_left]}, interior, dims)[0] == []
    assert filter_boundary({0: [flush_right]}, interior, dims)[0] == []
    assert filter_boundary({0: [inside]}, interior, dims)[0] == [inside]


def test_overflow_beyond_eps_is_dropped_even_at_image_border():
    dims = ImageDims(1000, 800)
    layout = one_chip(Box(0, 0, 80, 80), Box(0, 0, 160, 160), 2.0)
    assert filter_boundary({0: [d(-1.5, 40, 30, 60)]}, layout, dims)[0] != []
    assert filter_boundary({0: [d(-3, 40, 30, 60)]}, layout, dims)[0] == []


def test_nms_examples():
    a, b = d(0, 0, 10, 10, 0.9), d(0, 0, 10, 10, 0.8)
    assert nms([b, a], 0.6) == [a]
    disjoint = [d(20 * i, 0, 10, 10, 0.1 * (i + 1)) for i in range(5)]
    assert sorted(nms(disjoint, 0.6), key=lambda x: x.box.x) == disjoint
    assert nms([], 0.6) == []


def test_nms_is_per_category():
    a, b = d(0, 0, 10, 10, 0.9, 1), d(0, 0, 10, 10, 0.8, 2)
    assert nms([a, b], 0.6) == [a, b]


def test_nms_matches_reference(rng):
    for _ in range(100):
        dets = random_dets(rng, int(rng.integers(0, 200)), cats=2)
        thr = float(rng.uniform(0.2, 0.8))
        want = nms_reference([(x.box.xyxy(), x.score, x.category) for x in dets], thr)
        got = nms(dets, thr)
        assert {id(x) for x in got} == {id(dets[k]) for k in want}


def test_nms_antichain_and_top_score(rng):
    for _ in range(50):
        dets = random_dets(rng, 100, span=200)
        kept = nms(dets, 0.5)
        assert max(dets, key=lambda x: x.score) in kept
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                assert a.category != b.category or iou(a.box, b.box) <= 0.5
        assert {x.score for x in kept} <= {x.score for x in dets}


def test_nms_ties_keep_first_inserted():
    a, b = d(0, 0, 10, 10, 0.5), d(1, 0, 10, 10, 0.5)
    assert nms([a, b], 0.5) == [a]
    assert nms([b, a], 0.5) == [b]


def test_fuse_without_coarse_is_nms_of_fine(rng):
    fine = random_dets(rng, 40)
    coarse = random_dets(rng, 10)
    cfg = FusionConfig(fuse_coarse=False)
    assert fuse(coarse, fine, cfg) == nms(fine, 0.6)


def test_fuse_drops_large_fine_boxes():
    big = d(0, 0, 120, 120, 0.9)
    small = d(300, 300, 20, 40, 0.8)
    assert fuse([], [big, small]) == [small]
    edge = d(0, 0, 96, 96, 0.9)
    assert fuse([], [edge]) == []


def test_fuse_keeps_disjoint_coarse_and_fine():
    large = d(0, 0, 200, 200, 0.6)
    small = d(500, 500, 20, 20, 0.7)
    assert fuse([large], [small]) == [small, large]


def test_fuse_empty_fine_is_nms_of_coarse(rng):
    coarse = random_dets(rng, 50)
    assert fuse(coarse, []) == nms(coarse, 0.6)


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(nms_iou=1.0)
    with pytest.raises(ValueError):
        FusionConfig(boundary_eps=-1)


def test_transfer_then_remap_recovers_clipped_gt(rng):
    dims = ImageDims(1600, 900)
    for _ in range(100):
        regions = []
        for _ in range(int(rng.integers(1, 8))):
            w, h = float(rng.uniform(60, 500)), float(rng.uniform(80, 300))
            regions.append(Box(float(rng.uniform(0, dims.W - w)), float(rng.uniform(0, dims.H - h)), w, h))
        layout = plan_chips(regions, 3, 160, h_min=80, dims=dims)
        gts = [Detection(Box(float(x), float(y), float(w), float(h)), 1.0)
               for x, y, w, h in zip(rng.uniform(0, 1500, 30), rng.uniform(0, 800, 30),
                                     rng.uniform(4, 60, 30), rng.uniform(4, 90, 30))]
        moved = transfer_ground_truth(gts, layout)
        for k, dets in moved.items():
            assert len(remap_detections({k: dets}, layout)) == len(dets)
        # per placement the remapped box equals the gt clipped to that placement's src
        for p in layout.placements:
            single = ChipLayout(layout.chip_size, layout.rows, layout.row_height, (Placement(p.region_id, p.src, p.dst, p.scale, 0),), 1)
            for g in gts:
                clipped = intersection(g.box, p.src)
                if clipped is None or clipped.area <= 0.85 * g.box.area:
                    continue
                (chip_det,) = transfer_ground_truth([g], single)[0]
                (back,) = remap_detections({0: [chip_det]}, single)
                assert np.max(np.abs(np.subtract(back.box.xyxy(), clipped.xyxy()))) <= 1.0


def test_fuse_image_end_to_end():
    dims = ImageDims(1000, 800)
    layout = one_chip(Box(400, 300, 80, 80), Box(0, 0, 160, 160), 2.0)
    fine = {0: [d(60, 60, 20, 40, 0.8)]}
    coarse = [d(430, 330, 10, 20, 0.3), d(0, 0, 300, 300, 0.9)]
    out = fuse_image(coarse, fine, layout, dims)
    assert [x.score for x in out] == [0.9, 0.8]
    assert out[1].box == Box(430, 330, 10, 20)
