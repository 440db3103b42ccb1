"""Walk-on-spheres Monte Carlo for Brownian exit laws in D = B - K.

Path ensembles are cut into fixed-size chunks; chunk i always draws from
RngStream(seed, stream_base + i), so counts depend only on (config, seed) and
never on how many worker processes ran the chunks.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .errors import CensoringError, GeometryError
from .extensions import parallel_map
from .geometry import BoolArray, ConeSpec, Domain, FloatArray, Point, PointLike, as_point, in_cone
from .metrics import log_paths

logger = logging.getLogger(__name__)

Z95 = float(norm.ppf(0.975))
CENSOR_LIMIT = 0.01
DEFAULT_CHUNK = 4096
# stream indices reserved per query point in multi-point runs
STREAM_STRIDE = 1 << 32

KIND_SPHERE = 0
KIND_OBSTACLE = 1
KIND_CENSORED = 2


class ExitKind(str, Enum):
    SPHERE = "sphere"
    OBSTACLE = "obstacle"
    CENSORED = "censored"


_KIND_BY_CODE = {KIND_SPHERE: ExitKind.SPHERE, KIND_OBSTACLE: ExitKind.OBSTACLE, KIND_CENSORED: ExitKind.CENSORED}


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_index < 2**64):
            raise ValueError("seed and stream_index must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))))


@dataclass(frozen=True)
class WosConfig:
    shell_eps: float = 1e-5
    max_steps: int = 100_000
    n_paths: int = 10_000
    safety_factor: float = 1.0
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self) -> None:
        if not self.shell_eps > 0:
            raise ValueError(f"shell_eps must be > 0, got {self.shell_eps}")
        if self.max_steps < 1 or self.n_paths < 1 or self.chunk_size < 1:
            raise ValueError("max_steps, n_paths and chunk_size must be positive")
        if not 0 < self.safety_factor <= 1:
            raise ValueError(f"safety_factor must lie in (0, 1], got {self.safety_factor}")

    def check_domain(self, dom: Domain) -> None:
        if self.shell_eps >= 1e-2 * dom.outer_radius:
            raise ValueError(f"shell_eps={self.shell_eps} must be below 1% of the outer radius {dom.outer_radius}")


@dataclass(frozen=True)
class ExitRecord:
    kind: ExitKind
    exit_point: Optional[Point]
    steps: int


def sample_unit_sphere(rng: np.random.Generator, d: int, size: Optional[int] = None) -> FloatArray:
    """Uniform points on S^{d-1} from normalised Gaussian vectors; one point when size is None."""
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    g = rng.standard_normal((1 if size is None else size, d))
    out = g / np.linalg.norm(g, axis=1, keepdims=True)
    return out[0] if size is None else out


def wos_exit_batch(
    starts: FloatArray, dom: Domain, cfg: WosConfig, rng: np.random.Generator
) -> Tuple[np.ndarray, FloatArray, np.ndarray]:
    """Run one walk per row of `starts`; returns (kind codes, exit points, step counts).

    A walker within shell_eps of K is an obstacle exit even when it is also
    within the sphere shell. Sphere exits are projected radially onto the sphere.
    """
    pos = np.array(starts, dtype=np.float64, copy=True)
    n, d = pos.shape
    if d != dom.dimension:
        raise GeometryError(f"start dimension {d} does not match domain dimension {dom.dimension}")
    if np.any(dom.sphere_distance(pos) < 0):
        raise GeometryError("start point outside the closed outer ball")
    center = dom.center_point
    kinds = np.full(n, KIND_CENSORED, dtype=np.int8)
    exits = np.full((n, d), np.nan)
    steps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)

    for step in range(cfg.max_steps + 1):
        if active.size == 0:
            break
        p = pos[active]
        to_sphere = dom.sphere_distance(p)
        to_obstacle = dom.obstacle_distance(p)
        on_obstacle = to_obstacle <= cfg.shell_eps
        on_sphere = (to_sphere <= cfg.shell_eps) & ~on_obstacle
        kinds[active[on_obstacle]] = KIND_OBSTACLE
        if np.any(on_sphere):
            offset = p[on_sphere] - center
            exits[active[on_sphere]] = center + dom.outer_radius * offset / np.linalg.norm(offset, axis=1)[:, None]
            kinds[active[on_sphere]] = KIND_SPHERE
        moving = ~(on_obstacle | on_sphere)
        active = active[moving]
        if active.size == 0 or step == cfg.max_steps:
            break
        radius = cfg.safety_factor * np.minimum(to_sphere[moving], to_obstacle[moving])
        pos[active] = p[moving] + radius[:, None] * sample_unit_sphere(rng, d, active.size)
        steps[active] += 1
    return kinds, exits, steps


def wos_exit(start: PointLike, dom: Domain, cfg: WosConfig, rng: RngStream) -> ExitRecord:
    kinds, exits, steps = wos_exit_batch(as_point(start)[None, :], dom, cfg, rng.generator())
    kind = _KIND_BY_CODE[int(kinds[0])]
    return ExitRecord(kind=kind, exit_point=exits[0] if kind is ExitKind.SPHERE else None, steps=int(steps[0]))


def wilson_interval(successes: int, n: int, z: float = Z95) -> Tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _binomial_sigma(successes: int, n: int) -> float:
    if n <= 0:
        return math.inf
    p = successes / n
    # never report zero spread on an all-or-nothing sample
    return math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)


@dataclass(frozen=True)
class PairedEstimate:
    start: Tuple[float, ...]
    n: int
    count_u: int
    count_v: int
    count_obstacle: int
    censored: int
    seed: int

    @property
    def u_hat(self) -> float:
        return self.count_u / self.n

    @property
    def v_hat(self) -> float:
        return self.count_v / self.n

    @property
    def hit_hat(self) -> float:
        return self.count_obstacle / self.n

    @property
    def ci_u(self) -> Tuple[float, float]:
        return wilson_interval(self.count_u, self.n)

    @property
    def ci_v(self) -> Tuple[float, float]:
        return wilson_interval(self.count_v, self.n)

    @property
    def ci_hit(self) -> Tuple[float, float]:
        return wilson_interval(self.count_obstacle, self.n)

    @property
    def sigma_u(self) -> float:
        return _binomial_sigma(self.count_u, self.n)

    @property
    def sigma_v(self) -> float:
        return _binomial_sigma(self.count_v, self.n)

    @property
    def sigma_hit(self) -> float:
        return _binomial_sigma(self.count_obstacle, self.n)

    @property
    def ratio(self) -> float:
        """u_hat / v_hat, i.e. the cone fraction among sphere exits."""
        return self.count_u / self.count_v if self.count_v else math.nan

    @property
    def ratio_sigma(self) -> float:
        return _binomial_sigma(self.count_u, self.count_v)

    @property
    def ratio_ci(self) -> Tuple[float, float]:
        return wilson_interval(self.count_u, self.count_v)


@dataclass(frozen=True)
class _Chunk:
    start: Tuple[float, ...]
    dom: Domain
    cone: ConeSpec
    cfg: WosConfig
    seed: int
    stream_index: int
    size: int


def _run_chunk(chunk: _Chunk) -> Tuple[int, int, int, int]:
    gen = RngStream(chunk.seed, chunk.stream_index).generator()
    starts = np.tile(np.asarray(chunk.start, dtype=np.float64), (chunk.size, 1))
    kinds, exits, _ = wos_exit_batch(starts, chunk.dom, chunk.cfg, gen)
    sphere = kinds == KIND_SPHERE
    count_u = int(np.count_nonzero(_cone_hits(exits[sphere], chunk.cone)))
    return (
        count_u,
        int(np.count_nonzero(sphere)),
        int(np.count_nonzero(kinds == KIND_OBSTACLE)),
        int(np.count_nonzero(kinds == KIND_CENSORED)),
    )


def _cone_hits(points: FloatArray, cone: ConeSpec) -> BoolArray:
    if points.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(in_cone(points, cone), dtype=bool)


def _chunk_sizes(n_paths: int, chunk_size: int) -> List[int]:
    full, rest = divmod(n_paths, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def estimate_uv(
    start: PointLike,
    dom: Domain,
    cone: ConeSpec,
    cfg: WosConfig,
    seed: int,
    stream_base: int = 0,
    workers: Optional[int] = None,
) -> PairedEstimate:
    """Paired estimates of u = P(exit on the sphere inside the cone) and v = P(exit on the sphere off K)."""
    cfg.check_domain(dom)
    p = as_point(start)
    if p.size != dom.dimension:
        raise GeometryError(f"start dimension {p.size} does not match domain dimension {dom.dimension}")
    if float(dom.boundary_distance(p[None, :])[0]) <= 0:
        raise GeometryError(f"start point {p.tolist()} is not inside D")
    origin = tuple(float(c) for c in p)
    chunks = [
        _Chunk(origin, dom, cone, cfg, seed, stream_base + i, size)
        for i, size in enumerate(_chunk_sizes(cfg.n_paths, cfg.chunk_size))
    ]
    results = parallel_map(_run_chunk, chunks, workers)
    count_u, count_v, count_obstacle, censored = (sum(col) for col in zip(*results))
    log_paths("wos", {"sphere": count_v, "obstacle": count_obstacle, "censored": censored})

    if censored > CENSOR_LIMIT * cfg.n_paths:
        logger.error(f"Aborting estimate at {origin}: {censored} of {cfg.n_paths} paths hit max_steps")
        raise CensoringError(censored, cfg.n_paths)
    if censored:
        logger.warning(f"{censored} of {cfg.n_paths} paths censored at {origin}; reported, not resolved")
    return PairedEstimate(
        start=origin,
        n=cfg.n_paths,
        count_u=count_u,
        count_v=count_v,
        count_obstacle=count_obstacle,
        censored=censored,
        seed=seed,
    )


@dataclass(frozen=True)
class RatioBound:
    estimates: List[PairedEstimate] = field(default_factory=list)
    double_ratio: float = 1.0
    double_ratio_ci: Tuple[float, float] = (1.0, 1.0)
    worst_pair: Tuple[int, int] = (0, 0)

    @property
    def min_ratio(self) -> float:
        return min((e.ratio for e in self.estimates), default=math.nan)


def _log_ratio_variance(est: PairedEstimate) -> float:
    if est.count_u == 0:
        return math.inf
    return (1.0 - est.ratio) / est.count_u


def estimate_ratio_bound(
    points: Sequence[PointLike],
    dom: Domain,
    cone: ConeSpec,
    cfg: WosConfig,
    seed: int,
    workers: Optional[int] = None,
) -> RatioBound:
    """Per-point paired estimates plus the worst (u(x)/v(x)) / (u(y)/v(y)) over all pairs.

    The interval on the double ratio propagates the delta-method variance of
    log(u/v), (1 - rho) / count_u, through both endpoints.
    """
    estimates = []
    for i, raw in enumerate(points):
        p = as_point(raw)
        if float(np.linalg.norm(p - dom.center_point)) >= 0.5 * dom.outer_radius or cone.direction * p[cone.axis] <= 0:
            raise GeometryError(f"query point {p.tolist()} must lie in B(0,1/2) on the cone side")
        estimates.append(estimate_uv(p, dom, cone, cfg, seed, stream_base=i * STREAM_STRIDE, workers=workers))
    if len(estimates) < 2:
        return RatioBound(estimates=estimates)

    ratios = np.array([e.ratio for e in estimates])
    if np.any(~np.isfinite(ratios)) or np.any(ratios <= 0):
        logger.warning("A query point saw no cone exits; the double ratio is unbounded on this sample")
        return RatioBound(estimates=estimates, double_ratio=math.inf, double_ratio_ci=(math.inf, math.inf))
    hi, lo = int(np.argmax(ratios)), int(np.argmin(ratios))
    value = float(ratios[hi] / ratios[lo])
    spread = Z95 * math.sqrt(_log_ratio_variance(estimates[hi]) + _log_ratio_variance(estimates[lo]))
    ci = (value * math.exp(-spread), value * math.exp(spread))
    return RatioBound(estimates=estimates, double_ratio=value, double_ratio_ci=ci, worst_pair=(hi, lo))
