from dataclasses import replace

import pytest

from c2fdet.bench import BenchSettings, make_scenes, run_bench, tile_count
from c2fdet.config import PROFILES
from c2fdet.formats import dump_json
from c2fdet.geom import ImageDims
from c2fdet.simkit import OracleParams


def test_tile_count():
    assert tile_count(ImageDims(640, 640)) == 1
    assert tile_count(ImageDims(2048, 1024)) == 4 * 2
    assert tile_count(ImageDims(1920, 1080)) == 4 * 2


def test_scenes_are_reproducible():
    s = BenchSettings()
    assert make_scenes(5, 3, s) == make_scenes(5, 3, s)
    assert all(4 <= len(x.objects) <= 12 for x in make_scenes(20, 0, s))


@pytest.mark.parametrize("profile", sorted(PROFILES))
def test_perfect_oracle_gives_perfect_ap(profile):
    perfect = OracleParams(size50=0, loc_noise=0.0, fp_rate=0.0)
    settings = BenchSettings(detector=perfect, localizer=perfect)
    bench, _, _ = run_bench(PROFILES[profile], 20, 1, settings)
    assert bench.coarse.AP50 == 1.0 and bench.pipeline.AP50 == 1.0


def test_tiny_profile_sparse_full_hd_uses_few_chips():
    settings = BenchSettings(width=1920, height=1080)
    bench, _, _ = run_bench(PROFILES["tinyperson-like"], 50, 0, settings)
    assert bench.mean_chips < 4
    assert bench.tiles_per_image == 8


def test_tiny_profile_output_excludes_coarse_results():
    bench, scenes, results = run_bench(PROFILES["tinyperson-like"], 5, 0)
    for r in results:
        coarse_boxes = {d.box for d in r.coarse}
        assert not coarse_boxes & {d.box for d in r.detections}


def test_bench_report_is_deterministic():
    a, _, _ = run_bench(PROFILES["citypersons-like"], 20, 4)
    b, _, _ = run_bench(PROFILES["citypersons-like"], 20, 4)
    assert dump_json(a.to_dict()) == dump_json(b.to_dict())
    c, _, _ = run_bench(PROFILES["citypersons-like"], 20, 5)
    assert dump_json(a.to_dict()) != dump_json(c.to_dict())


def test_deltas():
    bench, _, _ = run_bench(PROFILES["citypersons-like"], 10, 0)
    d = bench.deltas()
    assert d["AP50"] == pytest.approx(bench.pipeline.AP50 - bench.coarse.AP50)
    assert d["recall_rate"] is None
