import json

import pytest

from harnacklab.config import SCENARIO_SCHEMAS, default_config, parse_batch, parse_config
from harnacklab.errors import ConfigError
from harnacklab.geometry import SegmentObstacle


def _paths(info):
    return [path for path, _ in info.value.errors]


def test_defaults_fill_in():
    cfg = parse_config('{"name": "masson", "seed": 3}')
    assert cfg.seed == 3
    assert cfg.engine == "lattice"
    assert cfg.param("sizes") == [16, 32, 64]
    assert cfg.output_format == "csv"
    assert cfg.with_seed(9).seed == 9 and cfg.seed == 3


def test_every_scenario_has_a_default_config():
    for name in SCENARIO_SCHEMAS:
        cfg = default_config(name, seed=1)
        assert cfg.name == name
        assert cfg.engine in cfg.schema.engines


def test_full_config():
    raw = {
        "name": "bhp-uniform",
        "seed": 11,
        "dimension": 2,
        "beta": 0.2,
        "engine": "fd",
        "obstacles": [{"type": "segment", "a": [-0.9, 0.0], "b": [0.0, 0.0]}],
        "points": [[0.25, 0.0]],
        "params": {"h": 0.01},
        "output": {"dir": "out", "format": "json"},
    }
    cfg = parse_config(json.dumps(raw))
    assert cfg.obstacles == (SegmentObstacle((-0.9, 0.0), (0.0, 0.0)),)
    assert cfg.points == ((0.25, 0.0),)
    assert cfg.beta == 0.2
    assert cfg.param("h") == 0.01
    assert cfg.to_dict()["output"] == {"dir": "out", "format": "json"}
    assert parse_config(json.dumps(cfg.to_dict())) == cfg


def test_all_errors_are_reported_at_once():
    raw = {
        "name": "masson",
        "seed": -1,
        "colour": "red",
        "engine": "wos",
        "params": {"sizes": [16], "bogus": 1},
        "output": {"format": "xml", "extra": True},
    }
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(raw))
    paths = _paths(info)
    for path in ("colour", "seed", "engine", "params.bogus", "output.extra", "output.format"):
        assert path in paths
    assert "params.sizes" not in paths


def test_unknown_scenario_and_missing_name():
    with pytest.raises(ConfigError) as info:
        parse_config('{"name": "nope"}')
    assert _paths(info) == ["name"]
    with pytest.raises(ConfigError):
        parse_config("{}")
    with pytest.raises(ConfigError):
        default_config("nope")


def test_wide_beta_needs_override():
    with pytest.raises(ConfigError) as info:
        parse_config('{"name": "bhp-uniform", "beta": 1.2}')
    assert "allow_wide_beta" in str(info.value)
    cfg = parse_config('{"name": "bhp-uniform", "beta": 1.2, "allow_wide_beta": true}')
    assert cfg.beta == 1.2


def test_obstacle_and_point_dimensions():
    raw = {
        "name": "bhp-uniform",
        "obstacles": [{"type": "ball", "center": [0.0, 0.0, 0.0], "radius": 0.1}, {"type": "blob"}],
        "points": [[0.1]],
    }
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(raw))
    assert _paths(info) == ["obstacles[0]", "obstacles[1]", "points[0]"]


def test_syntax_error_position():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "name": "masson",\n  "seed": \n}')
    assert info.value.line == 4
    assert info.value.column is not None


def test_batch():
    configs = parse_batch('{"scenarios": [{"name": "masson"}, {"name": "lemma-grid", "seed": 2}]}')
    assert [c.name for c in configs] == ["masson", "lemma-grid"]
    assert parse_batch('{"scenarios": []}') == []
    assert len(parse_batch('{"name": "carleson"}')) == 1


def test_batch_errors_carry_the_entry_index():
    with pytest.raises(ConfigError) as info:
        parse_batch('{"scenarios": [{"name": "masson"}, {"name": "masson", "engine": "fd"}], "x": 1}')
    assert _paths(info) == ["x", "scenarios[1].engine"]
