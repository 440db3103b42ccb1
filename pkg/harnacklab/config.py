"""Scenario configuration files.

A config is a JSON object; a batch file is {"scenarios": [config, ...]}. Parsing
collects every problem it finds and raises one ConfigError listing them by key
path, so a user fixes a file in one pass.
"""

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

from .errors import ConfigError
from .geometry import MAX_DIMENSION, MIN_DIMENSION, ObstacleShape, obstacle_from_dict
from .kernel import DimensionConstants

ENGINES = ("wos", "fd", "lattice", "quad", "qhyp")
FORMATS = ("csv", "json")
TOP_LEVEL_KEYS = {
    "name",
    "seed",
    "dimension",
    "beta",
    "allow_wide_beta",
    "obstacles",
    "engine",
    "points",
    "params",
    "output",
}
OUTPUT_KEYS = {"dir", "format"}

Check = Callable[[Any], Optional[str]]


def _number(lo: float = -math.inf, hi: float = math.inf, lo_open: bool = False) -> Check:
    def check(value: Any) -> Optional[str]:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"expected a number, got {type(value).__name__}"
        if value < lo or (lo_open and value == lo) or value > hi:
            left = "(" if lo_open else "["
            return f"must lie in {left}{lo}, {hi}]"
        return None

    return check


def _integer(lo: int = 0, hi: Optional[int] = None) -> Check:
    def check(value: Any) -> Optional[str]:
        if isinstance(value, bool) or not isinstance(value, int):
            return f"expected an integer, got {type(value).__name__}"
        if value < lo or (hi is not None and value > hi):
            return f"must lie in [{lo}, {hi if hi is not None else 'inf'}]"
        return None

    return check


def _list_of(item: Check, min_len: int = 1) -> Check:
    def check(value: Any) -> Optional[str]:
        if not isinstance(value, list) or len(value) < min_len:
            return f"expected a list with at least {min_len} item(s)"
        for i, entry in enumerate(value):
            msg = item(entry)
            if msg:
                return f"item {i}: {msg}"
        return None

    return check


def _choice(*options: str) -> Check:
    def check(value: Any) -> Optional[str]:
        return None if value in options else f"must be one of {list(options)}"

    return check


def _text(value: Any) -> Optional[str]:
    return None if isinstance(value, str) else f"expected a string, got {type(value).__name__}"


_POSITIVE = _number(0.0, lo_open=True)
_UNIT_OPEN = _number(0.0, 1.0, lo_open=True)


@dataclass(frozen=True)
class ScenarioSchema:
    engine: str
    engines: Tuple[str, ...]
    dimension: int
    params: Dict[str, Tuple[Any, Check]]


SCENARIO_SCHEMAS: Dict[str, ScenarioSchema] = {
    "lemma-grid": ScenarioSchema(
        "quad",
        ("quad",),
        2,
        {
            "dmin": (2, _integer(2, MAX_DIMENSION)),
            "dmax": (10, _integer(2, MAX_DIMENSION)),
            "gap_grid": (100_000, _integer(2)),
            "reflection_grid": (1000, _integer(2)),
        },
    ),
    "cone-exit": ScenarioSchema(
        "quad",
        ("quad", "wos"),
        2,
        {
            "dims": ([2, 3], _list_of(_integer(2, 3))),
            "axis_points": (50, _integer(1)),
            "lower_half_points": (200, _integer(1)),
            "tol": (1e-8, _POSITIVE),
            "slack": (1e-7, _number(0.0)),
            "derivative_points": (20, _integer(1)),
            "strip_n": (64, _integer(1)),
            "escape_points": ([0.1, 0.25, 0.4], _list_of(_UNIT_OPEN)),
            "n_paths": (100_000, _integer(1)),
            "shell_eps": (1e-5, _POSITIVE),
        },
    ),
    "bhp-uniform": ScenarioSchema(
        "wos",
        ("wos", "fd"),
        2,
        {
            "n_paths": (30_000, _integer(1)),
            "shell_eps": (1e-5, _POSITIVE),
            "h": (1.0 / 256, _POSITIVE),
            "stability_factor": (3.0, _number(1.0)),
        },
    ),
    "masson": ScenarioSchema(
        "lattice",
        ("lattice",),
        2,
        {
            "sizes": ([16, 32, 64], _list_of(_integer(16, 256))),
            "n_walks": (100_000, _integer(1)),
            "mc_cases": (20, _integer(0)),
            "mc_max_n": (32, _integer(2, 256)),
            "norm": ("euclidean", _choice("euclidean", "linf")),
            "random_seed": (7, _integer(0)),
            "stability": (0.20, _POSITIVE),
        },
    ),
    "counterexample-d3": ScenarioSchema(
        "wos",
        ("wos",),
        3,
        {
            "deltas": ([0.02, 0.04, 0.08], _list_of(_number(0.0, 0.2, lo_open=True), min_len=2)),
            "y": (0.25, _number(0.1, 0.9)),
            "n_paths": (1_000_000, _integer(1)),
            "plate_paths": (100_000, _integer(1)),
            "shell_eps": (1e-5, _POSITIVE),
            "slope_tolerance": (0.3, _POSITIVE),
        },
    ),
    "qhbc-suite": ScenarioSchema(
        "qhyp",
        ("qhyp",),
        2,
        {
            "h": (1.0 / 128, _POSITIVE),
            "ss_h": (1.0 / 64, _POSITIVE),
            "stencil": (3, _integer(1, 5)),
            "r": (0.5, _UNIT_OPEN),
            "eps": (0.1, _UNIT_OPEN),
            "nodes_per_radius": (256, _integer(16)),
            "c1_limit": (3.0, _POSITIVE),
            "spiral_turns": ([2, 3], _list_of(_integer(1, 8), min_len=2)),
            "spiral_h": (1.0 / 256, _POSITIVE),
        },
    ),
    "carleson": ScenarioSchema(
        "fd",
        ("fd",),
        2,
        {
            "h": (1.0 / 256, _POSITIVE),
            "r": (0.5, _number(0.25, 0.75, lo_open=True)),
            "eps": (0.1, _number(0.0, 0.125, lo_open=True)),
            "nodes_per_radius": (256, _integer(16)),
            "c1_limit": (3.0, _POSITIVE),
            "stability_factor": (3.0, _number(1.0)),
        },
    ),
    "bhp-2d-general": ScenarioSchema(
        "fd",
        ("fd",),
        2,
        {
            "h": (1.0 / 512, _POSITIVE),
            "query_radius": (1.0 / 64, _number(0.0, 1.0 / 32, lo_open=True)),
            "query_angle_max": (135.0, _number(0.0, 180.0, lo_open=True)),
            "r": (0.5, _number(0.25, 0.75, lo_open=True)),
            "eps": (0.1, _number(0.0, 0.125, lo_open=True)),
            "nodes_per_radius": (256, _integer(16)),
            "c1_limit": (3.0, _POSITIVE),
            "grid_tolerance": (0.1, _POSITIVE),
            "stability_factor": (3.0, _number(1.0)),
            "dump_dir": ("", _text),
        },
    ),
    "engine-crosscheck": ScenarioSchema(
        "wos",
        ("wos",),
        2,
        {
            "n_paths": (100_000, _integer(1)),
            "shell_eps": (1e-5, _POSITIVE),
            "h": (1.0 / 256, _POSITIVE),
        },
    ),
}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: Optional[int] = None
    dimension: int = 2
    beta: Optional[float] = None
    allow_wide_beta: bool = False
    obstacles: Tuple[ObstacleShape, ...] = ()
    engine: str = ""
    points: Tuple[Tuple[float, ...], ...] = ()
    params: Dict[str, Any] = field(default_factory=dict)
    output_dir: str = "."
    output_format: str = "csv"

    @property
    def schema(self) -> ScenarioSchema:
        return SCENARIO_SCHEMAS[self.name]

    def param(self, key: str) -> Any:
        return self.params[key]

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "dimension": self.dimension,
            "beta": self.beta,
            "allow_wide_beta": self.allow_wide_beta,
            "obstacles": [shape.to_dict() for shape in self.obstacles],
            "engine": self.engine,
            "points": [list(p) for p in self.points],
            "params": dict(self.params),
            "output": {"dir": self.output_dir, "format": self.output_format},
        }


def _dimensions_used(name: str, dimension: int, params: Dict[str, Any]) -> List[int]:
    if name == "cone-exit":
        return list(params.get("dims", [dimension]))
    return [dimension]


def _validate(raw: Any, prefix: str = "") -> Tuple[Optional[ScenarioConfig], List[Tuple[str, str]]]:
    errors: List[Tuple[str, str]] = []

    def err(key: str, msg: str) -> None:
        errors.append((f"{prefix}{key}", msg))

    if not isinstance(raw, dict):
        err("", "a scenario config must be a JSON object")
        return None, errors
    for key in sorted(set(raw) - TOP_LEVEL_KEYS):
        err(key, "unknown key")

    name = raw.get("name")
    if name is None:
        err("name", "missing required key")
        return None, errors
    if name not in SCENARIO_SCHEMAS:
        err("name", f"unknown scenario {name!r}; expected one of {sorted(SCENARIO_SCHEMAS)}")
        return None, errors
    schema = SCENARIO_SCHEMAS[name]

    seed = raw.get("seed")
    if seed is not None and _integer(0, 2**64 - 1)(seed):
        err("seed", "must be an unsigned 64-bit integer")

    dimension = raw.get("dimension", schema.dimension)
    msg = _integer(MIN_DIMENSION, MAX_DIMENSION)(dimension)
    if msg:
        err("dimension", msg)
        dimension = schema.dimension

    engine = raw.get("engine", schema.engine)
    if engine not in ENGINES:
        err("engine", f"must be one of {list(ENGINES)}")
    elif engine not in schema.engines:
        err("engine", f"scenario {name} runs on {list(schema.engines)}, not {engine!r}")

    params: Dict[str, Any] = {key: default for key, (default, _) in schema.params.items()}
    raw_params = raw.get("params", {})
    if not isinstance(raw_params, dict):
        err("params", "must be an object")
        raw_params = {}
    for key, value in raw_params.items():
        if key not in schema.params:
            err(f"params.{key}", f"unknown parameter for {name}")
            continue
        msg = schema.params[key][1](value)
        if msg:
            err(f"params.{key}", msg)
        else:
            params[key] = value
    if name == "lemma-grid" and params["dmin"] > params["dmax"]:
        err("params.dmin", "must not exceed dmax")

    allow_wide = raw.get("allow_wide_beta", False)
    if not isinstance(allow_wide, bool):
        err("allow_wide_beta", "expected true or false")
        allow_wide = False
    beta = raw.get("beta")
    if beta is not None:
        msg = _number(0.0, math.pi / 2, lo_open=True)(beta)
        if msg:
            err("beta", msg)
        elif not allow_wide:
            for d in _dimensions_used(name, dimension, params):
                alpha = DimensionConstants.for_dimension(d).alpha_d
                if beta > alpha:
                    err("beta", f"{beta} exceeds alpha_d={alpha:.6f} for d={d}; set allow_wide_beta to override")
                    break

    obstacles: List[ObstacleShape] = []
    raw_obstacles = raw.get("obstacles", [])
    if not isinstance(raw_obstacles, list):
        err("obstacles", "must be a list")
        raw_obstacles = []
    for i, spec in enumerate(raw_obstacles):
        if not isinstance(spec, dict):
            err(f"obstacles[{i}]", "must be an object")
            continue
        try:
            shape = obstacle_from_dict(spec)
        except (KeyError, TypeError, ValueError) as e:
            err(f"obstacles[{i}]", str(e))
            continue
        if shape.dimension != dimension:
            err(f"obstacles[{i}]", f"has dimension {shape.dimension}, config has {dimension}")
            continue
        obstacles.append(shape)

    points: List[Tuple[float, ...]] = []
    raw_points = raw.get("points", [])
    if not isinstance(raw_points, list):
        err("points", "must be a list")
        raw_points = []
    for i, p in enumerate(raw_points):
        if not (isinstance(p, list) and len(p) == dimension and all(_number()(c) is None for c in p)):
            err(f"points[{i}]", f"must be a list of {dimension} numbers")
            continue
        points.append(tuple(float(c) for c in p))

    output = raw.get("output", {})
    out_dir, out_format = ".", "csv"
    if not isinstance(output, dict):
        err("output", "must be an object")
    else:
        for key in sorted(set(output) - OUTPUT_KEYS):
            err(f"output.{key}", "unknown key")
        out_dir = output.get("dir", ".")
        out_format = output.get("format", "csv")
        if not isinstance(out_dir, str):
            err("output.dir", "must be a string")
        if out_format not in FORMATS:
            err("output.format", f"must be one of {list(FORMATS)}")

    if errors:
        return None, errors
    return (
        ScenarioConfig(
            name=name,
            seed=seed,
            dimension=dimension,
            beta=float(beta) if beta is not None else None,
            allow_wide_beta=allow_wide,
            obstacles=tuple(obstacles),
            engine=engine,
            points=tuple(points),
            params=params,
            output_dir=out_dir,
            output_format=out_format,
        ),
        [],
    )


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([("", f"syntax error: {e.msg}")], line=e.lineno, column=e.colno) from e


def parse_config(text: str) -> ScenarioConfig:
    cfg, errors = _validate(_load_json(text))
    if errors or cfg is None:
        raise ConfigError(errors)
    return cfg


def parse_batch(text: str) -> List[ScenarioConfig]:
    """A batch file ({"scenarios": [...]}) or a single config, as a list of configs."""
    raw = _load_json(text)
    if not (isinstance(raw, dict) and "scenarios" in raw):
        return [parse_config(text)]
    extra = sorted(set(raw) - {"scenarios"})
    errors: List[Tuple[str, str]] = [(key, "unknown key") for key in extra]
    entries = raw["scenarios"]
    if not isinstance(entries, list):
        raise ConfigError(errors + [("scenarios", "must be a list")])
    configs = []
    for i, entry in enumerate(entries):
        cfg, errs = _validate(entry, prefix=f"scenarios[{i}].")
        errors.extend(errs)
        if cfg is not None:
            configs.append(cfg)
    if errors:
        raise ConfigError(errors)
    return configs


def default_config(name: str, seed: Optional[int] = None) -> ScenarioConfig:
    if name not in SCENARIO_SCHEMAS:
        raise ConfigError([("name", f"unknown scenario {name!r}")])
    return parse_config(json.dumps({"name": name, "seed": seed}))
