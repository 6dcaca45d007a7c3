import json

import pytest

from c2fdet.config import PROFILES, PipelineConfig, load_config
from c2fdet.formats import SchemaError
from c2fdet.geom import ImageDims


def test_profiles():
    city, tiny = PROFILES["citypersons-like"], PROFILES["tinyperson-like"]
    assert city.coarse_size == tiny.coarse_size == (1333, 800)
    assert (city.rows, city.row_height, city.chip_size) == (3, 160, 480)
    assert (tiny.rows, tiny.row_height, tiny.chip_size) == (4, 160, 640)
    assert city.fuse_coarse and not tiny.fuse_coarse
    assert tiny.h_min == 80 and city.alpha == 1.5


def test_dict_round_trip():
    for cfg in PROFILES.values():
        assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_downsample_scale():
    assert PipelineConfig().downsample_scale(ImageDims(2048, 1024)) == pytest.approx(1333 / 2048)
    assert PipelineConfig().downsample_scale(ImageDims(1000, 2000)) == pytest.approx(0.4)


def test_unknown_keys_and_profiles_rejected():
    with pytest.raises(SchemaError, match="unknown config keys"):
        PipelineConfig.from_dict({"tua": 0.3})
    with pytest.raises(SchemaError, match="unknown profile"):
        PipelineConfig.from_dict({"profile": "coco"})
    with pytest.raises(SchemaError):
        PipelineConfig.from_dict({"tau": 1.5})


def test_load_config_layers(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"profile": "tinyperson-like", "alpha": 2.0, "seed": 3}))
    cfg = load_config(path)
    assert cfg.rows == 4 and cfg.alpha == 2.0 and cfg.seed == 3
    assert load_config(path, seed=9).seed == 9
    assert load_config(path, profile="citypersons-like").rows == 3
    assert load_config().profile == "citypersons-like"
