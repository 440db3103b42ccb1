"""Quasihyperbolic distance k_Omega on planar domains Omega = B(c, R) - K.

k_Omega is approximated by shortest paths on a grid graph. Grid nodes with
d(x, dOmega) >= h/2 are vertices; two vertices a, b are joined when their
offset (i, j) is primitive with max(|i|, |j|) <= stencil and the segment is
certified inside Omega (d(a) + d(b) > |a - b|). The weight is the segment length
times the Simpson average of 1/d over (a, midpoint, b). Larger stencils cut the
direction bias of the 8-neighbour graph (about 8%) to about 1.3% at stencil 3.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DisconnectedDomainError, GeometryError, InsufficientRangeError
from .geometry import Domain, FloatArray, Point, PointLike, as_point

logger = logging.getLogger(__name__)

DEFAULT_STENCIL = 3
MIN_SAMPLES = 100
MIN_DECADES = 2.0
FIT_BINS = 96
SUBCELLS = 4
STABLE_REL = 0.1
SS_TAUS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
ANGLE_SCAN = 20_000
ANGLE_TOL = 1e-9


def stencil_offsets(radius: int) -> List[Tuple[int, int]]:
    """Primitive offsets with max(|i|, |j|) <= radius, one of each +/- pair."""
    if radius < 1:
        raise ValueError(f"stencil radius must be >= 1, got {radius}")
    out = []
    for i in range(0, radius + 1):
        for j in range(-radius, radius + 1):
            if (i == 0 and j <= 0) or math.gcd(i, abs(j)) != 1:
                continue
            out.append((i, j))
    return out


def _simpson_weight(length: FloatArray, da: FloatArray, dm: FloatArray, db: FloatArray) -> FloatArray:
    return length * (1.0 / da + 4.0 / dm + 1.0 / db) / 6.0


class QhGraph:
    def __init__(self, dom: Domain, h: float, stencil: int = DEFAULT_STENCIL) -> None:
        if dom.dimension != 2:
            raise GeometryError("quasihyperbolic graphs are built for planar domains only")
        if not h > 0:
            raise ValueError(f"grid spacing must be > 0, got {h}")
        self.dom = dom
        self.h = h
        self.stencil = stencil
        centre = dom.center_point
        half = int(math.ceil(dom.outer_radius / h))
        steps = h * np.arange(-half, half + 1)
        self.axes = (centre[0] + steps, centre[1] + steps)
        gx, gy = np.meshgrid(*self.axes, indexing="ij")
        self.grid_points = np.stack([gx, gy], axis=-1)
        self.grid_distance = dom.boundary_distance(self.grid_points.reshape(-1, 2)).reshape(gx.shape)

        node_mask = self.grid_distance >= 0.5 * h
        self.grid_index = np.full(gx.shape, -1, dtype=np.int64)
        self.grid_index[node_mask] = np.arange(int(np.count_nonzero(node_mask)))
        self.points: FloatArray = self.grid_points[node_mask]
        self.d: FloatArray = self.grid_distance[node_mask]
        self.matrix = self._build_edges()
        logger.debug(f"QhGraph h={h} stencil={stencil}: {self.n_nodes} nodes, {self.matrix.nnz} edges")

    @property
    def n_nodes(self) -> int:
        return int(self.points.shape[0])

    def _build_edges(self) -> csr_matrix:
        n = self.grid_index.shape[0]
        rows, cols, weights = [], [], []
        for i, j in stencil_offsets(self.stencil):
            a = self.grid_index[0 : n - i, max(0, -j) : n - max(0, j)]
            b = self.grid_index[i:n, max(0, j) : n - max(0, -j)]
            both = (a >= 0) & (b >= 0)
            a, b = a[both], b[both]
            length = self.h * math.hypot(i, j)
            da, db = self.d[a], self.d[b]
            ok = da + db > length
            a, b, da, db = a[ok], b[ok], da[ok], db[ok]
            dm = self.dom.boundary_distance(0.5 * (self.points[a] + self.points[b]))
            rows.append(a)
            cols.append(b)
            weights.append(_simpson_weight(np.full(a.size, length), da, dm, db))
        r, c, w = np.concatenate(rows), np.concatenate(cols), np.concatenate(weights)
        return coo_matrix((w, (r, c)), shape=(self.n_nodes, self.n_nodes)).tocsr()

    def nearest_node(self, p: PointLike) -> int:
        q = as_point(p)
        return int(np.argmin(np.sum((self.points - q) ** 2, axis=1)))

    def _links(self, p: PointLike) -> Tuple[Optional[int], np.ndarray, FloatArray]:
        """Certified segments from p to nearby nodes: (coincident node or None, nodes, weights)."""
        q = as_point(p)
        dq = float(self.dom.boundary_distance(q[None, :])[0])
        if dq <= 0:
            raise GeometryError(f"point {q.tolist()} is not inside the domain")
        centre_idx = np.rint((q - np.array([self.axes[0][0], self.axes[1][0]])) / self.h).astype(int)
        lo = np.maximum(centre_idx - self.stencil - 1, 0)
        hi = np.minimum(centre_idx + self.stencil + 2, self.grid_index.shape[0])
        window = self.grid_index[lo[0] : hi[0], lo[1] : hi[1]].ravel()
        nodes = window[window >= 0]
        delta = np.linalg.norm(self.points[nodes] - q, axis=1)
        same = nodes[delta < 1e-12 * self.h]
        if same.size:
            return int(same[0]), np.empty(0, dtype=np.int64), np.empty(0)
        ok = self.d[nodes] + dq > delta
        nodes, delta = nodes[ok], delta[ok]
        dm = self.dom.boundary_distance(0.5 * (self.points[nodes] + q))
        return None, nodes, _simpson_weight(delta, np.full(nodes.size, dq), dm, self.d[nodes])

    def distances_from(self, p: PointLike) -> FloatArray:
        """k from p to every node (inf outside p's component)."""
        node, nodes, weights = self._links(p)
        if node is not None:
            return np.asarray(dijkstra(self.matrix, directed=False, indices=node))
        if nodes.size == 0:
            raise DisconnectedDomainError(f"point {as_point(p).tolist()} has no certified link to the graph")
        n = self.n_nodes
        base = coo_matrix(self.matrix)
        data = np.concatenate([base.data, weights])
        rows = np.concatenate([base.row, np.full(nodes.size, n)])
        cols = np.concatenate([base.col, nodes])
        augmented = coo_matrix((data, (rows, cols)), shape=(n + 1, n + 1)).tocsr()
        return np.asarray(dijkstra(augmented, directed=False, indices=n))[:n]

    def value_at(self, dist: FloatArray, q: PointLike) -> float:
        """Extend node distances to an arbitrary point through its certified links."""
        node, nodes, weights = self._links(q)
        if node is not None:
            return float(dist[node])
        if nodes.size == 0:
            return math.inf
        return float(np.min(dist[nodes] + weights))


@dataclass(frozen=True)
class QhDistance:
    value: float
    coarse: float
    error: float


def _graph_distance(graph: QhGraph, x: Point, y: Point) -> float:
    return graph.value_at(graph.distances_from(x), y)


def qh_distance(
    omega: Domain, x: PointLike, y: PointLike, h: float, stencil: int = DEFAULT_STENCIL
) -> QhDistance:
    """Graph k_Omega(x, y) at spacing h, with |k_h - k_2h| as the convergence estimate."""
    p, q = as_point(x), as_point(y)
    if np.array_equal(p, q):
        return QhDistance(0.0, 0.0, 0.0)
    # one canonical direction makes the result exactly symmetric
    first, second = (p, q) if tuple(p) <= tuple(q) else (q, p)
    fine = _graph_distance(QhGraph(omega, h, stencil), first, second)
    coarse = _graph_distance(QhGraph(omega, 2.0 * h, stencil), first, second)
    if not math.isfinite(fine):
        raise DisconnectedDomainError(f"{p.tolist()} and {q.tolist()} lie in different components")
    return QhDistance(fine, coarse, abs(fine - coarse) if math.isfinite(coarse) else math.inf)


@dataclass(frozen=True)
class QhbcFit:
    C1: float
    C2: float
    max_violation: float
    n_samples: int
    x0: Tuple[float, ...]
    d0: float


def _envelope(log_ratio: FloatArray, k: FloatArray) -> Tuple[float, float]:
    """Line C1*L + C2 above every sample with the least mean height over the samples."""
    res = linprog(
        c=[float(np.sum(log_ratio)), float(log_ratio.size)],
        A_ub=np.column_stack([-log_ratio, -np.ones_like(log_ratio)]),
        b_ub=-k,
        bounds=[(0, None), (None, None)],
        method="highs",
    )
    if not res.success:
        raise InsufficientRangeError(f"envelope fit failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


def qhbc_fit(
    graph: QhGraph,
    x0: Optional[PointLike] = None,
    samples: Optional[Sequence[PointLike]] = None,
    bins: int = FIT_BINS,
) -> QhbcFit:
    """Fit k(x, x0) <= C1 log(d(x0)/d(x)) + C2.

    Without explicit samples every reachable node is a sample; the envelope is
    fitted to the per-bin maxima of k over `bins` bins of log(d0/d) and the
    violation is measured over all samples. x0 defaults to the node farthest
    from the boundary.
    """
    if x0 is None:
        start = graph.points[int(np.argmax(graph.d))]
    else:
        start = as_point(x0)
    d0 = float(graph.dom.boundary_distance(start[None, :])[0])
    dist = graph.distances_from(start)

    if samples is None:
        reach = np.isfinite(dist)
        k, d = dist[reach], graph.d[reach]
    else:
        pts = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        k = np.array([graph.value_at(dist, s) for s in pts])
        d = graph.dom.boundary_distance(pts)
        if not np.all(np.isfinite(k)):
            raise DisconnectedDomainError("a sample point is not connected to x0")
    origin = tuple(float(c) for c in start)

    if k.size == 1:
        return QhbcFit(0.0, float(k[0]), 0.0, 1, origin, d0)
    decades = math.log10(float(np.max(d)) / float(np.min(d)))
    if k.size < MIN_SAMPLES or decades < MIN_DECADES:
        raise InsufficientRangeError(
            f"need >= {MIN_SAMPLES} samples over >= {MIN_DECADES} decades of d, got {k.size} over {decades:.2f}"
        )

    log_ratio = np.log(d0 / d)
    edges = np.linspace(float(log_ratio.min()), float(log_ratio.max()), bins + 1)
    which = np.clip(np.digitize(log_ratio, edges) - 1, 0, bins - 1)
    sel_l, sel_k = [], []
    for b in np.unique(which):
        members = np.flatnonzero(which == b)
        top = members[int(np.argmax(k[members]))]
        sel_l.append(log_ratio[top])
        sel_k.append(k[top])
    c1, c2 = _envelope(np.array(sel_l), np.array(sel_k))
    violation = float(max(0.0, np.max(k - (c1 * log_ratio + c2))))
    return QhbcFit(c1, c2, violation, int(k.size), origin, d0)


def _power_integral(lo: FloatArray, hi: FloatArray, tau: float) -> FloatArray:
    """Integral of t^-tau over [lo, hi] (0 where hi <= lo), inf when it diverges at 0."""
    out = np.zeros_like(hi)
    live = hi > lo
    a, b = lo[live], hi[live]
    with np.errstate(divide="ignore", invalid="ignore"):
        if tau == 0.0:
            val = b - a
        elif tau < 1.0:
            val = (b ** (1.0 - tau) - a ** (1.0 - tau)) / (1.0 - tau)
        elif tau == 1.0:
            val = np.where(a > 0, np.log(b / np.where(a > 0, a, 1.0)), np.inf)
        else:
            val = np.where(a > 0, (a ** (1.0 - tau) - b ** (1.0 - tau)) / (tau - 1.0), np.inf)
    out[live] = val
    return out


def _cell_state(graph: QhGraph, dist: FloatArray) -> Tuple[np.ndarray, np.ndarray]:
    """Per grid cell (k, d): the node's own values, else those of the 3x3 neighbour with least k."""
    shape = graph.grid_index.shape
    k_grid = np.full(shape, np.inf)
    d_grid = np.zeros(shape)
    nodes = graph.grid_index >= 0
    k_grid[nodes] = dist[graph.grid_index[nodes]]
    d_grid[nodes] = graph.d[graph.grid_index[nodes]]
    pad_k = np.pad(k_grid, 1, constant_values=np.inf)
    pad_d = np.pad(d_grid, 1)
    best_k, best_d = k_grid.copy(), d_grid.copy()
    own = np.isfinite(k_grid)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            nk = pad_k[1 + di : 1 + di + shape[0], 1 + dj : 1 + dj + shape[1]]
            nd = pad_d[1 + di : 1 + di + shape[0], 1 + dj : 1 + dj + shape[1]]
            better = ~own & (nk < best_k)
            best_k[better] = nk[better]
            best_d[better] = nd[better]
    return best_k, best_d


def _ss_value(graph: QhGraph, dist: FloatArray, tau: float, sub: int = SUBCELLS) -> float:
    """Sum over cells of the integral of exp(tau k).

    Inside a cell k is modelled as k_node + log(d_node / t) where the boundary
    distance t drops below d_node and as k_node elsewhere; each subcell
    integrates that model exactly over its normal extent, clipped at t = 0.
    """
    k_cell, d_cell = _cell_state(graph, dist)
    live = np.isfinite(k_cell) & (graph.grid_distance > -graph.h)
    centres = graph.grid_points[live]
    ks, ds = k_cell[live], d_cell[live]
    delta = graph.h / sub
    shifts = (np.arange(sub) + 0.5) * delta - 0.5 * graph.h
    sx, sy = np.meshgrid(shifts, shifts, indexing="ij")
    offsets = np.stack([sx.ravel(), sy.ravel()], axis=1)
    pts = (centres[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    t = graph.dom.boundary_distance(pts)
    ks, ds = np.repeat(ks, sub * sub), np.repeat(ds, sub * sub)

    a = 0.5 * delta
    t0, t1 = np.maximum(t - a, 0.0), t + a
    inside = t1 > 0
    t0, t1, ks, ds = t0[inside], t1[inside], ks[inside], ds[inside]
    with np.errstate(over="ignore", invalid="ignore"):
        singular = ds**tau * _power_integral(t0, np.minimum(t1, ds), tau)
        regular = np.maximum(0.0, t1 - np.maximum(t0, ds))
        terms = np.exp(tau * ks) * (singular + regular) * (delta * delta / (2.0 * a))
    return float(np.sum(terms))


@dataclass(frozen=True)
class SsResult:
    tau: float
    value: float
    refined: float
    diverged: bool

    @property
    def stable(self) -> bool:
        if self.diverged or not math.isfinite(self.refined):
            return False
        return abs(self.refined - self.value) <= STABLE_REL * self.refined


@dataclass(frozen=True)
class SsSweep:
    results: List[SsResult] = field(default_factory=list)

    @property
    def largest_stable_tau(self) -> Optional[float]:
        stable = [r.tau for r in self.results if r.stable]
        return max(stable) if stable else None


def _ss_result(tau: float, value: float, refined: float) -> SsResult:
    diverged = not (math.isfinite(value) and math.isfinite(refined)) or refined >= 2.0 * value
    return SsResult(tau, value, refined, diverged)


def ss_sweep(
    omega: Domain, x0: PointLike, h: float, taus: Sequence[float] = SS_TAUS, stencil: int = DEFAULT_STENCIL
) -> SsSweep:
    """Integral of exp(tau k(x, x0)) over Omega at spacing h and h/2 for each tau."""
    if any(tau < 0 for tau in taus):
        raise ValueError("tau must be >= 0")
    coarse, fine = QhGraph(omega, h, stencil), QhGraph(omega, 0.5 * h, stencil)
    dist_c, dist_f = coarse.distances_from(x0), fine.distances_from(x0)
    results = [_ss_result(t, _ss_value(coarse, dist_c, t), _ss_value(fine, dist_f, t)) for t in taus]
    for r in results:
        if r.diverged:
            logger.info(f"Smith-Stegenga integral diverges at tau={r.tau} ({r.value:.4g} -> {r.refined:.4g})")
    return SsSweep(results)


def ss_integral(
    omega: Domain, x0: PointLike, ss_tau: float, h: float, stencil: int = DEFAULT_STENCIL
) -> SsResult:
    return ss_sweep(omega, x0, h, (ss_tau,), stencil).results[0]


@dataclass(frozen=True)
class HittingAngles:
    theta1: float
    theta2: float


def _touches(dom: Domain, r: float, eps: float, theta: float) -> bool:
    p = np.array([[r * math.cos(theta), r * math.sin(theta)]])
    return bool(dom.obstacle_distance(p)[0] <= r * eps)


def _first_touch(dom: Domain, r: float, eps: float, sign: float) -> Optional[float]:
    """Least theta in (0, 2 pi) with the closed ball at r e^{i sign theta} meeting K."""
    step = 2 * math.pi / ANGLE_SCAN
    thetas = step * np.arange(ANGLE_SCAN + 1)
    pts = np.stack([r * np.cos(sign * thetas), r * np.sin(sign * thetas)], axis=1)
    hits = np.flatnonzero(dom.obstacle_distance(pts) <= r * eps)
    if hits.size == 0:
        return None
    j = int(hits[0])
    if j == 0:
        logger.warning("the ball at angle 0 already meets K; hitting angle set to 0")
        return 0.0
    lo, hi = thetas[j - 1], thetas[j]
    while hi - lo > ANGLE_TOL:
        mid = 0.5 * (lo + hi)
        if _touches(dom, r, eps, sign * mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


def hitting_angles(dom: Domain, r: float, eps: float) -> Optional[HittingAngles]:
    """theta1 = first angle above 0 and theta2 = first angle below 0 where B(r e^{i theta}, r eps) meets K.

    The scan over 2e4 angles can miss contact intervals narrower than its step.
    """
    if dom.dimension != 2:
        raise GeometryError("hitting angles are defined in the plane")
    if not (0 < r < 1 and 0 < eps < 1):
        raise ValueError("need r and eps in (0, 1)")
    if not dom.obstacles:
        return None
    up = _first_touch(dom, r, eps, 1.0)
    if up is None:
        return None
    down = _first_touch(dom, r, eps, -1.0)
    return HittingAngles(up, -down if down is not None else -up)


@dataclass(frozen=True)
class GoodSetReport:
    r: float
    eps: float
    theta1: float
    theta2: float
    root1: Tuple[float, ...]
    root2: Tuple[float, ...]
    fit1: Optional[QhbcFit]
    fit2: Optional[QhbcFit]
    is_good: bool
    notes: Tuple[str, ...] = ()

    def constants(self, which: int) -> Tuple[float, float]:
        fit = self.fit1 if which == 1 else self.fit2
        return (fit.C1, fit.C2) if fit is not None else (math.nan, math.nan)


def good_set_check(
    dom: Domain,
    r: float,
    eps: float,
    nodes_per_radius: int = 256,
    stencil: int = DEFAULT_STENCIL,
    c1_limit: float = 3.0,
    tolerance: float = 0.5,
) -> GoodSetReport:
    """Locate the roots near the hitting angles and fit the QHBC on B(x_i, r eps) - K."""
    angles = hitting_angles(dom, r, eps)
    if angles is None:
        raise GeometryError(f"K does not meet any ball B(r e^(i theta), r eps) for r={r}, eps={eps}")
    radius = r * eps
    h = radius / nodes_per_radius
    roots, fits, notes = [], [], []
    for label, theta in (("root1", angles.theta1), ("root2", angles.theta2)):
        on_circle = np.array([r * math.cos(theta), r * math.sin(theta)])
        root = dom.nearest_obstacle_point(on_circle)
        if float(np.linalg.norm(root - on_circle)) > radius * (1 + 1e-9):
            raise GeometryError(f"{label} search failed: K does not meet the closed ball at theta={theta}")
        roots.append(tuple(float(c) for c in root))
        try:
            fit: Optional[QhbcFit] = qhbc_fit(QhGraph(dom.local(root, radius), h, stencil))
        except (InsufficientRangeError, DisconnectedDomainError) as e:
            logger.warning(f"QHBC fit at {label} {roots[-1]} failed: {e}")
            fit = None
            notes.append(f"{label}: {e}")
        fits.append(fit)

    good = True
    for label, fit in zip(("root1", "root2"), fits):
        if fit is None:
            good = False
        elif not (math.isfinite(fit.C1) and fit.C1 <= c1_limit):
            good = False
            notes.append(f"{label}: C1={fit.C1:.3f} above {c1_limit}")
        elif fit.max_violation > tolerance:
            good = False
            notes.append(f"{label}: violation {fit.max_violation:.3f} above {tolerance}")
    return GoodSetReport(r, eps, angles.theta1, angles.theta2, roots[0], roots[1], fits[0], fits[1], good, tuple(notes))
