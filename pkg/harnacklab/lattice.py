"""Simple random walk on Z^2 started near a lattice obstacle K in the left half-plane.

exact_solve computes, for every lattice point, P(F) where F = {the walk leaves
Q(0, N) before it hits K} and P(F and the exit site lies in the cone
W = {0 <= |x2| <= x1}). masson_mc estimates the conditional probability
P(exit in W | F) by direct simulation.
"""

import logging
import math
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConvergenceError
from .extensions import parallel_map
from .metrics import log_paths, log_solver_iterations
from .simulate import RngStream, wilson_interval

logger = logging.getLogger(__name__)

Site = Tuple[int, int]

NORMS = ("euclidean", "linf")
MAX_EXACT_N = 256
DEFAULT_OMEGA = 1.9
RESIDUAL_TOL = 1e-12
MAX_SWEEPS = 500_000
CHECK_EVERY = 10
WALK_CHUNK = 8192

CELL_FREE = 0
CELL_OBSTACLE = 1
CELL_EXTERIOR = 2

_STEPS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)], dtype=np.int64)


def in_square(site: Site, n: int, norm: str = "euclidean") -> bool:
    """Membership in Q(0, n) = {y : |y| <= n} for the chosen norm."""
    x, y = site
    if norm == "linf":
        return max(abs(x), abs(y)) <= n
    return x * x + y * y <= n * n


def in_cone_w(site: Site) -> bool:
    x, y = site
    return abs(y) <= x


@dataclass(frozen=True)
class LatticeProblem:
    N: int
    K: FrozenSet[Site]
    start: Site = (0, 0)
    norm: str = "euclidean"

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        object.__setattr__(self, "K", frozenset((int(a), int(b)) for a, b in self.K))
        object.__setattr__(self, "start", (int(self.start[0]), int(self.start[1])))
        outside = [s for s in self.K if s[0] > 0 or not in_square(s, self.N, self.norm)]
        if outside:
            raise ValueError(f"K must lie in Q(0,{self.N}) with x1 <= 0; offending sites {sorted(outside)[:5]}")
        if not in_square(self.start, self.N, self.norm):
            raise ValueError(f"start {self.start} lies outside Q(0,{self.N})")

    @property
    def offset(self) -> int:
        return self.N + 1

    def cell_codes(self) -> np.ndarray:
        """Grid over [-N-1, N+1]^2 indexed [x + offset, y + offset]: free, obstacle or exterior."""
        size = 2 * self.N + 3
        coords = np.arange(size) - self.offset
        x, y = np.meshgrid(coords, coords, indexing="ij")
        if self.norm == "linf":
            inside = np.maximum(np.abs(x), np.abs(y)) <= self.N
        else:
            inside = x * x + y * y <= self.N * self.N
        codes = np.where(inside, CELL_FREE, CELL_EXTERIOR).astype(np.int8)
        for a, b in self.K:
            codes[a + self.offset, b + self.offset] = CELL_OBSTACLE
        return codes

    def cone_mask(self) -> np.ndarray:
        size = 2 * self.N + 3
        coords = np.arange(size) - self.offset
        x, y = np.meshgrid(coords, coords, indexing="ij")
        return np.abs(y) <= x


@dataclass(frozen=True)
class ExactSolution:
    problem: LatticeProblem
    p_F: np.ndarray
    p_exit_W: np.ndarray
    residual: float
    sweeps: int

    def values_at(self, site: Site) -> Tuple[float, float]:
        """(P(F), P(F and exit in W)) from `site` with the first step forced (tau+)."""
        if not in_square(site, self.problem.N, self.problem.norm):
            raise ValueError(f"site {site} lies outside Q(0,{self.problem.N})")
        codes = self.problem.cell_codes()
        o = self.problem.offset
        i, j = site[0] + o, site[1] + o
        if codes[i, j] == CELL_FREE:
            return float(self.p_F[i, j]), float(self.p_exit_W[i, j])
        if codes[i, j] == CELL_EXTERIOR:
            raise ValueError(f"site {site} lies outside Q(0,{self.problem.N})")
        # start on K: one explicit first step; K neighbours contribute 0
        f = w = 0.0
        for di, dj in _STEPS:
            f += 0.25 * float(self.p_F[i + di, j + dj])
            w += 0.25 * float(self.p_exit_W[i + di, j + dj])
        return f, w

    def conditional_at(self, site: Site) -> float:
        f, w = self.values_at(site)
        return w / f if f > 0 else math.nan

    @property
    def start_conditional(self) -> float:
        return self.conditional_at(self.problem.start)


def _neighbour_mean(u: np.ndarray) -> np.ndarray:
    mean = np.zeros_like(u)
    mean[1:-1, 1:-1] = 0.25 * (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2])
    return mean


def sor_solve(
    fixed: np.ndarray, free: np.ndarray, omega: float = DEFAULT_OMEGA, tol: float = RESIDUAL_TOL
) -> Tuple[np.ndarray, float, int]:
    """Red-black SOR for the 4-neighbour mean-value equation on `free` cells.

    `fixed` carries the boundary data (and the initial guess on free cells);
    free cells must not touch the array border. Returns (solution, residual, sweeps).
    """
    u = fixed.astype(np.float64, copy=True)
    ii, jj = np.indices(u.shape)
    colours = [free & ((ii + jj) % 2 == 0), free & ((ii + jj) % 2 == 1)]
    residual = math.inf
    sweeps = 0
    while sweeps < MAX_SWEEPS:
        for colour in colours:
            mean = _neighbour_mean(u)
            u[colour] += omega * (mean[colour] - u[colour])
        sweeps += 1
        if sweeps % CHECK_EVERY == 0:
            residual = float(np.max(np.abs(_neighbour_mean(u)[free] - u[free]), initial=0.0))
            if residual <= tol:
                break
    log_solver_iterations("lattice", sweeps)
    if residual > tol:
        logger.error(f"Lattice SOR stopped at residual {residual:.3e} after {sweeps} sweeps")
        raise ConvergenceError(f"SOR residual {residual:.3e} above {tol:.1e}", achieved=residual, iterations=sweeps)
    return u, residual, sweeps


def exact_solve(prob: LatticeProblem, omega: float = DEFAULT_OMEGA, tol: float = RESIDUAL_TOL) -> ExactSolution:
    if prob.N > MAX_EXACT_N:
        raise ValueError(f"exact_solve supports N <= {MAX_EXACT_N}, got {prob.N}")
    codes = prob.cell_codes()
    free = codes == CELL_FREE
    exterior = codes == CELL_EXTERIOR
    data_f = np.where(exterior, 1.0, 0.0)
    data_w = np.where(exterior & prob.cone_mask(), 1.0, 0.0)
    p_f, res_f, sweeps_f = sor_solve(data_f, free, omega, tol)
    p_w, res_w, sweeps_w = sor_solve(data_w, free, omega, tol)
    logger.info(f"Lattice N={prob.N} |K|={len(prob.K)} solved in {sweeps_f}+{sweeps_w} sweeps")
    return ExactSolution(prob, p_f, p_w, max(res_f, res_w), sweeps_f + sweeps_w)


@dataclass(frozen=True)
class MassonEstimate:
    n_walks: int
    count_F: int
    count_W: int
    seed: int

    @property
    def flagged(self) -> bool:
        """True when no walk realised F, so there is no conditional estimate."""
        return self.count_F == 0

    @property
    def p_cond(self) -> float:
        return self.count_W / self.count_F if self.count_F else math.nan

    @property
    def ci(self) -> Tuple[float, float]:
        return wilson_interval(self.count_W, self.count_F)

    @property
    def sigma(self) -> float:
        if not self.count_F:
            return math.inf
        p = self.p_cond
        return math.sqrt(max(p * (1.0 - p), 1.0 / self.count_F) / self.count_F)


@dataclass(frozen=True)
class _WalkChunk:
    problem: LatticeProblem
    seed: int
    stream_index: int
    size: int


def _walk_chunk(chunk: _WalkChunk) -> Tuple[int, int]:
    prob = chunk.problem
    codes = prob.cell_codes()
    cone = prob.cone_mask()
    gen = RngStream(chunk.seed, chunk.stream_index).generator()
    o = prob.offset
    pos = np.tile(np.array([prob.start[0] + o, prob.start[1] + o], dtype=np.int64), (chunk.size, 1))
    count_f = count_w = 0
    # the first step is always taken, so a start on K is legitimate
    while pos.shape[0]:
        pos += _STEPS[gen.integers(0, 4, size=pos.shape[0])]
        state = codes[pos[:, 0], pos[:, 1]]
        exited = state == CELL_EXTERIOR
        count_f += int(np.count_nonzero(exited))
        count_w += int(np.count_nonzero(cone[pos[exited, 0], pos[exited, 1]]))
        pos = pos[state == CELL_FREE]
    return count_f, count_w


def masson_mc(prob: LatticeProblem, n_walks: int, seed: int, workers: Optional[int] = None) -> MassonEstimate:
    if n_walks < 1:
        raise ValueError("n_walks must be positive")
    full, rest = divmod(n_walks, WALK_CHUNK)
    sizes = [WALK_CHUNK] * full + ([rest] if rest else [])
    chunks = [_WalkChunk(prob, seed, i, size) for i, size in enumerate(sizes)]
    results = parallel_map(_walk_chunk, chunks, workers)
    count_f = sum(r[0] for r in results)
    count_w = sum(r[1] for r in results)
    log_paths("lattice", {"F": count_f, "killed": n_walks - count_f})
    est = MassonEstimate(n_walks=n_walks, count_F=count_f, count_W=count_w, seed=seed)
    if est.flagged:
        logger.warning(f"No walk from {prob.start} escaped Q(0,{prob.N}) before K; no conditional estimate")
    return est


@dataclass(frozen=True)
class SweepRow:
    family: str
    k_id: str
    N: int
    start: Site
    p_F: float
    p_cond: float
    method: str = "exact"


@dataclass(frozen=True)
class SweepResult:
    rows: List[SweepRow]
    residual: float = 0.0

    @property
    def min_cond(self) -> float:
        return min((r.p_cond for r in self.rows), default=math.nan)

    def min_cond_for(self, n: int) -> float:
        return min((r.p_cond for r in self.rows if r.N == n), default=math.nan)


def masson_sweep(
    family: str,
    members: Sequence[Tuple[str, Iterable[Site]]],
    sizes: Sequence[int],
    starts: Sequence[Site],
    norm: str = "euclidean",
) -> SweepResult:
    """Exact conditional probabilities for every (K, N, start); members are clipped to Q(0, N).

    Starts must satisfy x1 >= 0 and lie in Q(0, N/16).
    """
    rows = []
    residual = 0.0
    for n in sizes:
        for start in starts:
            if start[0] < 0 or not in_square(start, n // 16, norm):
                raise ValueError(f"start {start} must have x1 >= 0 and lie in Q(0,{n // 16})")
        for k_id, sites in members:
            prob = LatticeProblem(n, clip_to_square(sites, n, norm), starts[0], norm)
            solution = exact_solve(prob)
            residual = max(residual, solution.residual)
            for start in starts:
                p_f, _ = solution.values_at(start)
                rows.append(SweepRow(family, k_id, n, tuple(start), p_f, solution.conditional_at(start)))
    return SweepResult(rows, residual)


def clip_to_square(sites: Iterable[Site], n: int, norm: str = "euclidean") -> FrozenSet[Site]:
    return frozenset(s for s in sites if s[0] <= 0 and in_square(s, n, norm))


def slit(length: int) -> FrozenSet[Site]:
    return frozenset((-j, 0) for j in range(length + 1))


def comb(length: int, teeth: int, tooth_length: int) -> FrozenSet[Site]:
    """Slit along the negative x1-axis with `teeth` vertical teeth of both signs."""
    sites = set(slit(length))
    if teeth:
        spacing = max(1, length // (teeth + 1))
        for t in range(1, teeth + 1):
            x = -t * spacing
            for k in range(1, tooth_length + 1):
                sites.update({(x, k), (x, -k)})
    return frozenset(sites)


def l_shape(length: int) -> FrozenSet[Site]:
    return frozenset(slit(length) | {(-length, k) for k in range(1, length + 1)})


def reflect(sites: Iterable[Site]) -> FrozenSet[Site]:
    """Mirror image across the x1-axis."""
    return frozenset((a, -b) for a, b in sites)


def random_path(length: int, seed: int) -> FrozenSet[Site]:
    """Nearest-neighbour lattice path from the origin that never enters x1 > 0."""
    gen = RngStream(seed).generator()
    site = (0, 0)
    sites = {site}
    for _ in range(length):
        options = [(site[0] + dx, site[1] + dy) for dx, dy in _STEPS.tolist() if site[0] + dx <= 0]
        site = options[int(gen.integers(0, len(options)))]
        sites.add(site)
    return frozenset(sites)


def points(raw: Iterable[Sequence[int]]) -> FrozenSet[Site]:
    return frozenset((int(p[0]), int(p[1])) for p in raw)
