"""Scenario registry: every runner turns a ScenarioConfig into claim rows plus plot-ready tables."""

import logging
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .config import ScenarioConfig
from .errors import ConfigError, LabError, ScenarioError
from .extensions import parallel_map
from .fdsolver import (
    ArcTarget,
    ConeTarget,
    FdSolution,
    SphereTarget,
    dump_solution,
    harmonic_measure_fd_with_error,
    rasterize,
    solve_dirichlet,
)
from .geometry import (
    BallObstacle,
    ConeSpec,
    Domain,
    HyperplaneDisc,
    ObstacleShape,
    PolylineObstacle,
    SegmentObstacle,
    project_pi1,
)
from .kernel import (
    CapSpec,
    DimensionConstants,
    annulus_hit_probability,
    h_beta_quad,
    h_beta_x2_derivative,
    modified_poisson_gap,
    reflection_sum,
    strip_bound,
)
from .lattice import (
    LatticeProblem,
    clip_to_square,
    comb,
    l_shape,
    masson_mc,
    masson_sweep,
    points,
    random_path,
    reflect,
    slit,
)
from .metrics import log_scenario
from .qhyp import GoodSetReport, QhGraph, good_set_check, qh_distance, qhbc_fit, ss_integral, ss_sweep
from .report import ESTIMATE_HEADER, GOODSET_HEADER, LEMMA_HEADER, SWEEP_HEADER, ReportRow
from .simulate import PairedEstimate, RngStream, WosConfig, estimate_ratio_bound, estimate_uv

logger = logging.getLogger(__name__)

FAMILY_VERSION = "v1"
BHP_QUERY_POINTS: Tuple[Tuple[float, float], ...] = (
    (0.05, 0.0),
    (0.15, 0.0),
    (0.25, 0.0),
    (0.35, 0.0),
    (0.45, 0.0),
    (0.1, 0.1),
    (0.1, -0.1),
    (0.25, 0.2),
    (0.25, -0.2),
    (0.3, 0.3),
)
CROSSCHECK_POINTS: Tuple[Tuple[float, float], ...] = ((0.25, 0.0), (0.2, 0.15))
LATTICE_STARTS = ((0, 0), (1, 0), (0, 1))
UPPER_ARC = (math.pi / 4, 3 * math.pi / 4)
LOWER_ARC = (-3 * math.pi / 4, -math.pi / 4)
THICK_SLIT = 0.02

Shapes = Tuple[ObstacleShape, ...]
Member = Tuple[str, Shapes]


def spiral(turns: int, center: Tuple[float, float] = (-0.5, 0.0), outer: float = 0.4, inner: float = 0.02) -> Shapes:
    """Logarithmic spiral from radius `outer` down to `inner` around `center`; more turns means narrower gaps."""
    phi = np.linspace(0.0, 2 * math.pi * turns, 200 * turns + 1)
    radius = outer * (inner / outer) ** (phi / phi[-1])
    vertices = tuple((center[0] + r * math.cos(p), center[1] + r * math.sin(p)) for r, p in zip(radius, phi))
    return (PolylineObstacle(vertices),)


def adversarial_family() -> List[Member]:
    """Fixed K family in the closed left half-plane; bump FAMILY_VERSION on any change."""
    base = SegmentObstacle((-0.9, 0.0), (0.0, 0.0))
    teeth = tuple(SegmentObstacle((x, -0.25), (x, 0.25)) for x in (-0.2, -0.45, -0.7))
    angles = np.linspace(math.pi / 2, 3 * math.pi / 2, 65)
    arc = tuple((-abs(0.5 * math.cos(a)), 0.5 * math.sin(a)) for a in angles)
    return [
        ("straight-slit", (base,)),
        ("bent-slit", (PolylineObstacle(((0.0, 0.0), (-0.3, 0.0), (-0.5, 0.3), (-0.8, 0.35))),)),
        ("comb-3", (base,) + teeth),
        ("half-disc-arc", (PolylineObstacle(arc),)),
        ("spiral", spiral(3)),
    ]


def slit_families() -> Dict[str, List[Member]]:
    """Thin slits that are (1/2, 1/10)-good; members differ only away from the roots."""
    full = SegmentObstacle((-0.9, 0.0), (0.0, 0.0))
    tooth = SegmentObstacle((-0.8, -0.1), (-0.8, 0.1))
    far_tooth = SegmentObstacle((-0.65, 0.2), (-0.65, 0.3))
    return {
        "slit-length": [
            (f"slit-{length}", (SegmentObstacle((-length, 0.0), (0.0, 0.0)),)) for length in (0.6, 0.75, 0.9)
        ],
        "slit-teeth": [("teeth-0", (full,)), ("teeth-1", (full, tooth)), ("teeth-2", (full, tooth, far_tooth))],
    }


def lattice_family(n: int, seed: int) -> List[Tuple[str, frozenset]]:
    return [
        ("empty", frozenset()),
        ("origin", points([(0, 0)])),
        ("slit-half", slit(n // 2)),
        ("slit-full", slit(n)),
        ("comb-3", comb(n, 3, n // 4)),
        ("l-shape", l_shape(n // 2)),
        ("l-shape-reflected", reflect(l_shape(n // 2))),
        ("random-path", random_path(4 * n, seed)),
    ]


def derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class ScenarioOutcome:
    name: str
    rows: List[ReportRow] = field(default_factory=list)
    tables: Dict[str, Tuple[Tuple[str, ...], List[Sequence[Any]]]] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


class ScenarioRun:
    def __init__(self, cfg: ScenarioConfig) -> None:
        if cfg.seed is None:
            raise ConfigError([("seed", "a seed is required to run a scenario")])
        self.cfg = cfg
        self.seed: int = cfg.seed
        self.outcome = ScenarioOutcome(cfg.name)
        self._started = time.perf_counter()

    def param(self, key: str) -> Any:
        return self.cfg.param(key)

    def add(
        self, claim: str, measured: float, threshold: float, op: str, uncertainty: float = 0.0, detail: str = ""
    ) -> ReportRow:
        row = ReportRow.check(
            self.cfg.name, claim, measured, threshold, op, uncertainty, time.perf_counter() - self._started, detail
        )
        self.outcome.rows.append(row)
        return row

    def table(self, name: str, header: Tuple[str, ...]) -> List[Sequence[Any]]:
        return self.outcome.tables.setdefault(name, (header, []))[1]

    def record_estimate(self, label: str, est: PairedEstimate) -> None:
        u_lo, u_hi = est.ci_u
        v_lo, v_hi = est.ci_v
        self.table("estimates", ESTIMATE_HEADER).append(
            (label, len(est.start), est.start, est.n, est.count_u, est.count_v, est.u_hat, est.v_hat,
             u_lo, u_hi, v_lo, v_hi, est.censored, est.seed)
        )

    @contextmanager
    def guard(self, claim: str) -> Iterator[None]:
        try:
            yield
        except ScenarioError:
            raise
        except (LabError, ValueError, ArithmeticError) as e:
            logger.error(f"Scenario {self.cfg.name} failed on {claim}: {e}")
            raise ScenarioError(claim, e) from e

    def wos(self, n_paths_key: str = "n_paths") -> WosConfig:
        return WosConfig(shell_eps=self.param("shell_eps"), n_paths=self.param(n_paths_key))

    def cap(self, d: int) -> CapSpec:
        if self.cfg.beta is None:
            return CapSpec.default(d)
        return CapSpec.build(self.cfg.beta, d, allow_wide=self.cfg.allow_wide_beta)

    def members(self) -> List[Member]:
        if self.cfg.obstacles:
            return [("config", self.cfg.obstacles)]
        return adversarial_family()


def _lemma_grid(run: ScenarioRun) -> None:
    lemmas = run.table("lemmas", LEMMA_HEADER)
    for d in range(run.param("dmin"), run.param("dmax") + 1):
        kappa = DimensionConstants.for_dimension(d).kappa_d
        with run.guard("lemma-gap-nonnegative"):
            n_gap = run.param("gap_grid")
            worst = float(np.min(modified_poisson_gap(d, np.linspace(0.0, kappa, n_gap))))
        row = run.add("lemma-gap-nonnegative", worst, -1e-12, ">=", detail=f"d={d}")
        lemmas.append(("modified-poisson-gap", d, n_gap, worst, row.passed))
        with run.guard("reflection-sum-bound"):
            n_sum = run.param("reflection_grid")
            grid = np.linspace(0.0, kappa, n_sum)
            peak = float(np.max(reflection_sum(d, grid[:, None], grid[None, :])))
        row = run.add("reflection-sum-bound", peak, 2.0 + 1e-12, "<=", detail=f"d={d}")
        lemmas.append(("reflection-sum", d, n_sum, 2.0 - peak, row.passed))


def _lower_half_samples(seed: int, d: int, n: int) -> np.ndarray:
    gen = RngStream(seed, 0).generator()
    direction = gen.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    pts = direction * (0.95 * gen.random(n) ** (1.0 / d))[:, None]
    pts[:, 0] = -np.abs(pts[:, 0])
    return pts


def _cone_exit(run: ScenarioRun) -> None:
    tol, slack = run.param("tol"), run.param("slack")
    for d in run.param("dims"):
        with run.guard("cone-exit-axis-lower"):
            cap = run.cap(d)
            h0 = cap.h_at_origin
            axis = np.zeros((run.param("axis_points"), d))
            axis[:, 0] = np.linspace(0.02, 0.98, axis.shape[0])
            worst = min(h_beta_quad(x, cap, tol) - h0 for x in axis)
        run.add("cone-exit-axis-lower", worst, -slack, ">=", detail=f"d={d} beta={cap.beta!r}")

        with run.guard("cone-exit-lower-half-upper"):
            samples = _lower_half_samples(derived_seed(run.seed, d), d, run.param("lower_half_points"))
            plane = np.zeros((20, d))
            plane[:, 1] = np.linspace(0.0, 0.95, 20)
            worst = max(h_beta_quad(x, cap, tol) - h0 for x in np.vstack([samples, plane]))
        run.add("cone-exit-lower-half-upper", worst, slack, "<=", detail=f"d={d}")

        with run.guard("cone-exit-x2-decreasing"):
            grid = np.linspace(cap.kappa_beta + 0.01, 0.95, run.param("derivative_points"))
            steepest = max(h_beta_x2_derivative(float(x2), cap) for x2 in grid)
        run.add("cone-exit-x2-decreasing", steepest, 1e-6, "<=", detail=f"d={d}")

        with run.guard("strip-bound-limit"):
            n = run.param("strip_n")
            excess = strip_bound(cap, n) - h0
        run.add("strip-bound-limit", excess, 0.0, "info", detail=f"d={d} n={n}")

    if 2 not in run.param("dims") or run.cfg.engine != "wos":
        return
    cap = run.cap(2)
    cone = ConeSpec(cap.beta)
    dom = Domain(2, adversarial_family()[0][1])
    wos = run.wos()
    for i, x1 in enumerate(run.param("escape_points")):
        with run.guard("escape-ratio-lower-bound"):
            est = estimate_uv((x1, 0.0), dom, cone, wos, derived_seed(run.seed, 1, i))
        run.record_estimate("cone-exit", est)
        run.add(
            "escape-ratio-lower-bound", est.ratio, cap.h_at_origin - 3 * est.ratio_sigma, ">=",
            uncertainty=est.ratio_sigma, detail=f"x1={x1!r}",
        )
    with run.guard("axis-projection-ratio"):
        off = estimate_uv((0.25, 0.1), dom, cone, wos, derived_seed(run.seed, 2, 0))
        on = estimate_uv(project_pi1((0.25, 0.1)), dom, cone, wos, derived_seed(run.seed, 2, 1))
    run.record_estimate("cone-exit", off)
    run.record_estimate("cone-exit", on)
    run.add("axis-projection-ratio", off.ratio / on.ratio, 0.0, "info", detail="x=(0.25,0.1)")


def _fd_ratios(dom: Domain, cone: ConeSpec, pts: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    u = harmonic_measure_fd_with_error(dom, ConeTarget(cone), pts, h)
    v = harmonic_measure_fd_with_error(dom, SphereTarget(), pts, h)
    ratio = np.asarray(u.value) / np.asarray(v.value)
    sigma = (np.asarray(u.error) + ratio * np.asarray(v.error)) / np.asarray(v.value)
    return ratio, sigma


def _bhp_uniform(run: ScenarioRun) -> None:
    cap = run.cap(2)
    cone = ConeSpec(cap.beta)
    pts = np.array(run.cfg.points or BHP_QUERY_POINTS, dtype=np.float64)
    on_axis = pts[:, 1] == 0.0
    minima = []
    for k, (k_id, shapes) in enumerate(run.members()):
        dom = Domain(2, shapes)
        with run.guard("uniform-ratio-positive"):
            if run.cfg.engine == "fd":
                ratio, sigma = _fd_ratios(dom, cone, pts, run.param("h"))
                worst = float(ratio.max() / ratio.min()) if ratio.min() > 0 else math.inf
            else:
                bound = estimate_ratio_bound(pts, dom, cone, run.wos(), derived_seed(run.seed, k))
                for est in bound.estimates:
                    run.record_estimate(f"bhp-uniform/{k_id}", est)
                ratio = np.array([e.ratio for e in bound.estimates])
                sigma = np.array([e.ratio_sigma for e in bound.estimates])
                worst = bound.double_ratio
        lowest = int(np.argmin(ratio))
        minima.append(float(ratio[lowest]))
        run.add("uniform-ratio-positive", ratio[lowest], 0.0, ">", uncertainty=sigma[lowest], detail=k_id)
        if np.any(on_axis):
            margin = ratio[on_axis] + 3 * sigma[on_axis]
            j = int(np.argmin(margin))
            run.add(
                "escape-ratio-lower-bound", float(margin[j]), cap.h_at_origin, ">=",
                uncertainty=float(sigma[on_axis][j]), detail=f"{k_id} ratio+3sigma",
            )
        run.add("uniform-double-ratio", worst, 0.0, "info", detail=k_id)
    median = float(np.median(minima))
    run.add(
        "uniform-ratio-stability", min(minima) / median if median > 0 else math.nan,
        1.0 / run.param("stability_factor"), ">=", detail=f"family {FAMILY_VERSION}",
    )


def _masson(run: ScenarioRun) -> None:
    sizes, norm = sorted(run.param("sizes")), run.param("norm")
    sweep_table = run.table("sweep", SWEEP_HEADER)
    minima: Dict[int, float] = {}
    exact: Dict[Tuple[int, str, Tuple[int, int]], float] = {}
    residual = 0.0
    for n in sizes:
        members = lattice_family(n, run.param("random_seed"))
        with run.guard("masson-exact-residual"):
            result = masson_sweep(f"lattice-{FAMILY_VERSION}", members, [n], LATTICE_STARTS, norm)
        for row in result.rows:
            sweep_table.append((row.family, row.k_id, row.N, row.start, row.p_F, row.p_cond, row.method))
            exact[(row.N, row.k_id, row.start)] = row.p_cond
        residual = max(residual, result.residual)
        minima[n] = result.min_cond_for(n)
        run.add("masson-positive", minima[n], 0.0, ">", detail=f"N={n}")
        gap = max(abs(exact[(n, "l-shape", s)] - exact[(n, "l-shape-reflected", s)]) for s in ((0, 0), (1, 0)))
        run.add("masson-reflection-symmetry", gap, 1e-6, "<=", detail=f"N={n}")
    run.add("masson-exact-residual", residual, 1e-12, "<=")
    for small, large in zip(sizes, sizes[1:]):
        change = abs(minima[large] - minima[small]) / minima[small]
        run.add("masson-n-stability", change, run.param("stability"), "<=", detail=f"N={small}->{large}")

    cases = [
        (n, k_id, sites, start)
        for n in sizes
        if n <= run.param("mc_max_n")
        for k_id, sites in lattice_family(n, run.param("random_seed"))
        for start in LATTICE_STARTS
    ][: run.param("mc_cases")]
    for i, (n, k_id, sites, start) in enumerate(cases):
        with run.guard("masson-mc-agreement"):
            prob = LatticeProblem(n, clip_to_square(sites, n, norm), start, norm)
            est = masson_mc(prob, run.param("n_walks"), derived_seed(run.seed, i))
        sweep_table.append((f"lattice-{FAMILY_VERSION}", k_id, n, start, est.count_F / est.n_walks, est.p_cond, "mc"))
        target = exact[(n, k_id, start)]
        run.add(
            "masson-mc-agreement", abs(est.p_cond - target), 3 * est.sigma, "<=",
            uncertainty=est.sigma, detail=f"N={n} {k_id} start={start}",
        )


def _counterexample_d3(run: ScenarioRun) -> None:
    d = 3
    origin = (0.0, 0.0, 0.0)
    y = (run.param("y"), 0.0, 0.0)
    lower = ConeSpec(math.pi / 2, axis=0, direction=-1)
    wos, plate_wos = run.wos(), run.wos("plate_paths")
    deltas = sorted(run.param("deltas"))
    log_hit = []
    for i, delta in enumerate(deltas):
        with run.guard("annulus-hitting-law"):
            hit = estimate_uv(y, Domain(d, (BallObstacle(origin, delta),)), lower, wos, derived_seed(run.seed, 0, i))
            exact = annulus_hit_probability(y[0], delta, d)
        run.record_estimate(f"annulus/delta={delta!r}", hit)
        run.add(
            "annulus-hitting-law", abs(hit.hit_hat - exact), 3 * hit.sigma_hit, "<=",
            uncertainty=hit.sigma_hit, detail=f"delta={delta!r} exact={exact!r}",
        )
        with run.guard("counterexample-slope"):
            if hit.count_obstacle == 0:
                raise ArithmeticError(f"no path from y hit B(0,{delta})")
            log_hit.append(math.log(hit.hit_hat))

        with run.guard("counterexample-symmetric-split"):
            plate = Domain(d, (HyperplaneDisc(origin, 0, 1.0, delta),))
            far = estimate_uv(y, plate, lower, plate_wos, derived_seed(run.seed, 1, i))
            near = estimate_uv(origin, plate, lower, plate_wos, derived_seed(run.seed, 2, i))
        run.record_estimate(f"plate-y/delta={delta!r}", far)
        run.record_estimate(f"plate-0/delta={delta!r}", near)
        run.add(
            "counterexample-symmetric-split", abs(near.ratio - 0.5), 3 * near.ratio_sigma, "<=",
            uncertainty=near.ratio_sigma, detail=f"delta={delta!r}",
        )
        growth = near.ratio / far.ratio if far.count_u > 0 else math.nan
        run.add("counterexample-ratio-growth", growth, 0.0, "info", detail=f"delta={delta!r} crossings={far.count_u}")

    slope = float(np.polyfit(np.log(deltas), log_hit, 1)[0])
    run.add(
        "counterexample-slope", abs(slope - (d - 2)), run.param("slope_tolerance"), "<=", detail=f"slope={slope!r}"
    )


def _goodset_row(k_id: str, report: GoodSetReport) -> Tuple[Any, ...]:
    c1_a, c2_a = report.constants(1)
    c1_b, c2_b = report.constants(2)
    return (k_id, report.r, report.eps, report.theta1, report.theta2, c1_a, c2_a, c1_b, c2_b, report.is_good)


def _qhbc_suite(run: ScenarioRun) -> None:
    ball = Domain(2)
    h, ss_h, stencil = run.param("h"), run.param("ss_h"), run.param("stencil")
    centre = (0.0, 0.0)

    with run.guard("qh-ball-distance"):
        k = qh_distance(ball, centre, (0.5, 0.0), h, stencil)
    run.add("qh-ball-distance", abs(k.value - math.log(2)) / math.log(2), 0.02, "<=", uncertainty=k.error)

    with run.guard("qhbc-ball-fit"):
        fit = qhbc_fit(QhGraph(ball, h, stencil))
    run.add("qhbc-ball-fit", abs(fit.C1 - 1.0), 0.05, "<=", detail=f"C1={fit.C1!r}")
    run.add("qhbc-ball-fit", fit.C2, 0.15, "<=", detail="C2")

    with run.guard("ss-ball-value"):
        half = ss_integral(ball, centre, 0.5, ss_h, stencil)
    exact = 8 * math.pi / 3
    run.add(
        "ss-ball-value", abs(half.refined - exact) / exact, 0.03, "<=",
        uncertainty=abs(half.refined - half.value) / exact,
    )
    with run.guard("ss-divergence"):
        steep = ss_integral(ball, centre, 2.0, ss_h, stencil)
    run.add("ss-divergence", float(steep.diverged), 1.0, ">=", detail="tau=2")

    with run.guard("ss-largest-stable-tau"):
        sweep = ss_sweep(Domain(2, adversarial_family()[0][1]), (0.5, 0.0), ss_h, stencil=stencil)
    largest = sweep.largest_stable_tau
    run.add("ss-largest-stable-tau", largest if largest is not None else math.nan, 0.0, "info", detail="straight-slit")

    goodsets = run.table("goodsets", GOODSET_HEADER)
    thick = SegmentObstacle((-0.9, 0.0), (0.0, 0.0), THICK_SLIT)
    cusp = BallObstacle((-0.49, 2 * THICK_SLIT), THICK_SLIT)
    cases = (("thick-slit", (thick,), "good-set-slit"), ("tangency-cusp", (thick, cusp), "good-set-cusp-flagged"))
    for k_id, shapes, claim in cases:
        with run.guard(claim):
            report = good_set_check(
                Domain(2, shapes), run.param("r"), run.param("eps"), run.param("nodes_per_radius"),
                stencil, run.param("c1_limit"),
            )
        goodsets.append(_goodset_row(k_id, report))
        if claim == "good-set-slit":
            run.add(claim, float(report.is_good), 1.0, ">=", detail=k_id)
        else:
            run.add(claim, float(report.is_good), 0.0, "<=", detail=f"{k_id} C1={report.constants(1)[0]!r}")

    c1 = []
    for turns in sorted(run.param("spiral_turns")):
        with run.guard("qhbc-spiral-growth"):
            fit = qhbc_fit(QhGraph(Domain(2, spiral(turns)), run.param("spiral_h"), stencil))
        c1.append(fit.C1)
        run.add("qhbc-spiral-growth", fit.C1, 0.0, "info", detail=f"turns={turns}")
    run.add("qhbc-spiral-growth", c1[-1] - c1[0], 0.0, ">=", detail="tightest minus loosest C1")


def _check_good(run: ScenarioRun, k_id: str, dom: Domain) -> GoodSetReport:
    with run.guard("good-set-slit"):
        report = good_set_check(
            dom, run.param("r"), run.param("eps"), run.param("nodes_per_radius"), c1_limit=run.param("c1_limit")
        )
    run.table("goodsets", GOODSET_HEADER).append(_goodset_row(k_id, report))
    run.add("good-set-slit", float(report.is_good), 1.0, ">=", detail=k_id)
    return report


def _max_near(sol: FdSolution, centres: Sequence[Sequence[float]], radius: float) -> float:
    rd = sol.raster
    pts = rd.node_points()
    values = sol.values.ravel()
    interior = rd.interior.ravel()
    best = 0.0
    for c in centres:
        near = interior & (np.linalg.norm(pts - np.asarray(c), axis=1) < radius)
        if np.any(near):
            best = max(best, float(values[near].max()))
    return best


def _carleson(run: ScenarioRun) -> None:
    r, eps, h = run.param("r"), run.param("eps"), run.param("h")
    w0 = (r, 0.0)
    for family, members in slit_families().items():
        constants = []
        for k_id, shapes in members:
            dom = Domain(2, shapes)
            report = _check_good(run, k_id, dom)
            with run.guard("carleson-bound"):
                sol = solve_dirichlet(rasterize(dom, ArcTarget(*UPPER_ARC), h))
                base = float(sol.evaluate(w0))
                c = _max_near(sol, (report.root1, report.root2), 0.5 * r * eps) / base
            constants.append(c)
            run.add("carleson-bound", c, 0.0, "info", detail=f"{family}/{k_id}")
        spread = max(constants) / min(constants) if min(constants) > 0 else math.inf
        run.add("carleson-family-stability", spread, run.param("stability_factor"), "<=", detail=family)


def _double_ratio(u: Any, v: Any) -> float:
    q = np.asarray(u) / np.asarray(v)
    return float(q.max() / q.min())


def _bhp_2d_general(run: ScenarioRun) -> None:
    h = run.param("h")
    angles = np.radians(np.linspace(-run.param("query_angle_max"), run.param("query_angle_max"), 5))
    pts = run.param("query_radius") * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for family, members in slit_families().items():
        worst = []
        for k_id, shapes in members:
            dom = Domain(2, shapes)
            _check_good(run, k_id, dom)
            with run.guard("bhp2d-double-ratio"):
                u = harmonic_measure_fd_with_error(dom, ArcTarget(*UPPER_ARC), pts, h)
                v = harmonic_measure_fd_with_error(dom, ArcTarget(*LOWER_ARC), pts, h)
                fine, coarse = _double_ratio(u.value, v.value), _double_ratio(u.coarse, v.coarse)
            if run.param("dump_dir"):
                for side, est in (("upper", u), ("lower", v)):
                    dump_solution(est.solution, os.path.join(run.param("dump_dir"), f"{family}-{k_id}-{side}"))
            worst.append(fine)
            run.add("bhp2d-double-ratio", fine, 0.0, "info", uncertainty=abs(fine - coarse), detail=f"{family}/{k_id}")
            run.add(
                "fd-grid-convergence", abs(fine - coarse) / fine, run.param("grid_tolerance"), "<=",
                detail=f"{family}/{k_id}",
            )
        run.add("bhp2d-family-stability", max(worst) / min(worst), run.param("stability_factor"), "<=", detail=family)


def _engine_crosscheck(run: ScenarioRun) -> None:
    pts = np.array(run.cfg.points or CROSSCHECK_POINTS, dtype=np.float64)
    cone = ConeSpec(run.cap(2).beta)
    wos = run.wos()
    for k, (k_id, shapes) in enumerate(run.members()):
        dom = Domain(2, shapes)
        with run.guard("engine-agreement"):
            fd = harmonic_measure_fd_with_error(dom, SphereTarget(), pts, run.param("h"))
        fd_values, fd_errors = np.atleast_1d(fd.value), np.atleast_1d(fd.error)
        for i, p in enumerate(pts):
            with run.guard("engine-agreement"):
                est = estimate_uv(p, dom, cone, wos, derived_seed(run.seed, k, i))
            run.record_estimate(f"engine-crosscheck/{k_id}", est)
            budget = max(3 * est.sigma_v, 2 * float(fd_errors[i]))
            run.add(
                "engine-agreement", abs(est.v_hat - float(fd_values[i])), budget, "<=",
                uncertainty=est.sigma_v, detail=f"{k_id} x={tuple(float(c) for c in p)}",
            )


@dataclass(frozen=True)
class ScenarioInfo:
    name: str
    summary: str
    claims: Tuple[str, ...]
    runner: Callable[[ScenarioRun], None]


SCENARIOS: Dict[str, ScenarioInfo] = {
    info.name: info
    for info in (
        ScenarioInfo(
            "lemma-grid",
            "grid checks of the two kernel inequalities for d = dmin..dmax",
            ("lemma-gap-nonnegative", "reflection-sum-bound"),
            _lemma_grid,
        ),
        ScenarioInfo(
            "cone-exit",
            "cap harmonic measure h_beta on the axis, the lower half-ball and the x2 direction",
            (
                "cone-exit-axis-lower", "cone-exit-lower-half-upper", "cone-exit-x2-decreasing",
                "strip-bound-limit", "escape-ratio-lower-bound", "axis-projection-ratio",
            ),
            _cone_exit,
        ),
        ScenarioInfo(
            "bhp-uniform",
            "u/v over B(0,1/2) for the adversarial K family",
            ("uniform-ratio-positive", "escape-ratio-lower-bound", "uniform-double-ratio", "uniform-ratio-stability"),
            _bhp_uniform,
        ),
        ScenarioInfo(
            "masson",
            "lattice conditional escape probabilities, exact and Monte Carlo",
            (
                "masson-positive", "masson-reflection-symmetry", "masson-exact-residual",
                "masson-n-stability", "masson-mc-agreement",
            ),
            _masson,
        ),
        ScenarioInfo(
            "counterexample-d3",
            "punctured hyperplane in d = 3: the ratio bound fails as the hole shrinks",
            (
                "annulus-hitting-law", "counterexample-symmetric-split", "counterexample-ratio-growth",
                "counterexample-slope",
            ),
            _counterexample_d3,
        ),
        ScenarioInfo(
            "qhbc-suite",
            "quasihyperbolic distance, QHBC fits, integrability sweeps and good-set checks",
            (
                "qh-ball-distance", "qhbc-ball-fit", "ss-ball-value", "ss-divergence", "ss-largest-stable-tau",
                "good-set-slit", "good-set-cusp-flagged", "qhbc-spiral-growth",
            ),
            _qhbc_suite,
        ),
        ScenarioInfo(
            "carleson",
            "max of u near the roots against u(w0) for two slit families",
            ("good-set-slit", "carleson-bound", "carleson-family-stability"),
            _carleson,
        ),
        ScenarioInfo(
            "bhp-2d-general",
            "finite-difference double ratios near a planar boundary point for two slit families",
            ("good-set-slit", "bhp2d-double-ratio", "fd-grid-convergence", "bhp2d-family-stability"),
            _bhp_2d_general,
        ),
        ScenarioInfo(
            "engine-crosscheck",
            "walk-on-spheres against the finite-difference oracle for v",
            ("engine-agreement",),
            _engine_crosscheck,
        ),
    )
}


def execute(cfg: ScenarioConfig) -> ScenarioOutcome:
    info = SCENARIOS[cfg.name]
    run = ScenarioRun(cfg)
    logger.info(f"Running scenario {cfg.name} with seed {cfg.seed} on engine {cfg.engine}")
    started = time.perf_counter()
    try:
        info.runner(run)
    except ScenarioError:
        log_scenario(cfg.name, False, time.perf_counter() - started)
        raise
    outcome = run.outcome
    outcome.seconds = time.perf_counter() - started
    log_scenario(cfg.name, outcome.passed, outcome.seconds)
    n_passed = sum(r.passed for r in outcome.rows)
    logger.info(f"Scenario {cfg.name}: {n_passed}/{len(outcome.rows)} rows passed in {outcome.seconds:.1f}s")
    return outcome


def run_scenario(cfg: ScenarioConfig) -> List[ReportRow]:
    return execute(cfg).rows


def _execute_in_worker(cfg: ScenarioConfig) -> ScenarioOutcome:
    # pool workers are daemonic and cannot start pools of their own
    os.environ["HARNACKLAB_WORKERS"] = "1"
    return execute(cfg)


def run_batch(
    configs: Sequence[ScenarioConfig], parallel: bool = False, workers: Optional[int] = None
) -> List[ScenarioOutcome]:
    if parallel and len(configs) > 1:
        return parallel_map(_execute_in_worker, list(configs), workers)
    return [execute(cfg) for cfg in configs]
