"""Finite-difference Dirichlet oracle on rasterised balls with obstacles (d = 2, 3).

Nodes sit on a uniform grid of spacing h covering the outer ball plus one
node of padding. A node is
  outer     if |x - c| >= R; its datum is the target evaluated at the radial
            projection of x onto the sphere,
  obstacle  if |x - c| < R and d(x, K) <= h/2; datum 0,
  interior  otherwise.
The discrete Laplacian is the (2d+1)-point stencil, relaxed by red-black SOR.
"""

import logging
import math
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from .errors import ConvergenceError, DisconnectedDomainError, GeometryError
from .geometry import ConeSpec, Domain, FloatArray, PointLike, in_cone
from .metrics import log_solver_iterations

logger = logging.getLogger(__name__)

NODE_INTERIOR = 0
NODE_OBSTACLE = 1
NODE_OUTER = 2

MAX_NODES_3D = 128
DEFAULT_TOL = 1e-10
MAX_SWEEPS = 1_000_000
CHECK_EVERY = 25
QUERY_CLEARANCE = 2.0


class BoundaryTarget(ABC):
    """Dirichlet data on the outer sphere."""

    project = True

    @abstractmethod
    def values(self, points: FloatArray) -> FloatArray: ...


@dataclass(frozen=True)
class SphereTarget(BoundaryTarget):
    def values(self, points: FloatArray) -> FloatArray:
        return np.ones(points.shape[0])


@dataclass(frozen=True)
class ConeTarget(BoundaryTarget):
    """Indicator of the cap W_alpha ∩ dB."""

    cone: ConeSpec

    def values(self, points: FloatArray) -> FloatArray:
        return np.asarray(in_cone(points, self.cone), dtype=np.float64)


@dataclass(frozen=True)
class ArcTarget(BoundaryTarget):
    """Indicator of the arc theta_lo < arg(x) < theta_hi (d = 2, angles taken mod 2 pi)."""

    theta_lo: float
    theta_hi: float

    def __post_init__(self) -> None:
        if not 0 < self.theta_hi - self.theta_lo < 2 * math.pi:
            raise ValueError("arc must have length in (0, 2 pi)")

    def values(self, points: FloatArray) -> FloatArray:
        if points.shape[1] != 2:
            raise GeometryError("arc targets are two-dimensional")
        theta = np.arctan2(points[:, 1], points[:, 0])
        rel = np.mod(theta - self.theta_lo, 2 * math.pi)
        return ((rel > 0) & (rel < self.theta_hi - self.theta_lo)).astype(np.float64)


@dataclass(frozen=True)
class FunctionTarget(BoundaryTarget):
    """Arbitrary data g(x); with project=False it is sampled at the outer nodes themselves."""

    func: Callable[[FloatArray], FloatArray]
    project: bool = True

    def values(self, points: FloatArray) -> FloatArray:
        return np.asarray(self.func(points), dtype=np.float64)


@dataclass(frozen=True)
class RasterDomain:
    domain: Domain
    h: float
    lo: FloatArray
    mask: np.ndarray
    boundary_data: np.ndarray

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.mask.shape)

    @property
    def axes(self) -> Tuple[FloatArray, ...]:
        return tuple(self.lo[k] + self.h * np.arange(n) for k, n in enumerate(self.shape))

    @property
    def interior(self) -> np.ndarray:
        return self.mask == NODE_INTERIOR

    def node_points(self) -> FloatArray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def rasterize(dom: Domain, target: BoundaryTarget, h: float) -> RasterDomain:
    d = dom.dimension
    if d not in (2, 3):
        raise GeometryError(f"the finite-difference oracle supports d = 2 or 3, got {d}")
    if not h > 0:
        raise ValueError(f"grid spacing must be > 0, got {h}")
    centre = dom.center_point
    half = int(math.ceil(dom.outer_radius / h)) + 1
    n = 2 * half + 1
    if d == 3 and n > MAX_NODES_3D:
        raise ValueError(f"3D grids are limited to {MAX_NODES_3D} nodes per axis, h={h} needs {n}")
    lo = centre - half * h
    axes = [lo[k] + h * np.arange(n) for k in range(d)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)

    offset = pts - centre
    radius = np.linalg.norm(offset, axis=1)
    outer = radius >= dom.outer_radius
    obstacle = ~outer & (dom.obstacle_distance(pts) <= 0.5 * h)
    mask = np.full(pts.shape[0], NODE_INTERIOR, dtype=np.int8)
    mask[outer] = NODE_OUTER
    mask[obstacle] = NODE_OBSTACLE

    data = np.zeros(pts.shape[0])
    if np.any(outer):
        where = pts[outer]
        if target.project:
            where = centre + dom.outer_radius * offset[outer] / radius[outer, None]
        data[outer] = target.values(where)
    return RasterDomain(dom, h, lo, mask.reshape((n,) * d), data.reshape((n,) * d))


def _neighbour_mean(u: np.ndarray) -> np.ndarray:
    d = u.ndim
    out = np.zeros_like(u)
    core = tuple(slice(1, -1) for _ in range(d))
    acc = out[core]
    for axis in range(d):
        for window in (slice(2, None), slice(0, -2)):
            sl = list(core)
            sl[axis] = window
            acc += u[tuple(sl)]
    acc /= 2 * d
    return out


@dataclass(frozen=True)
class FdSolution:
    raster: RasterDomain
    values: np.ndarray
    residual: float
    sweeps: int

    def _check_query(self, pts: FloatArray) -> None:
        dom = self.raster.domain
        if np.any(dom.sphere_distance(pts) <= 0):
            raise GeometryError("query point outside the outer ball")
        clearance = dom.obstacle_distance(pts)
        if np.any(clearance < QUERY_CLEARANCE * self.raster.h):
            bad = pts[int(np.argmin(clearance))]
            raise GeometryError(f"query point {bad.tolist()} is closer than 2 cells to an obstacle")
        labels, _ = ndimage.label(self.raster.interior)
        idx = np.floor((pts - self.raster.lo) / self.raster.h).astype(np.int64)
        for row in idx:
            corners = labels[tuple(np.ix_(*[(k, k + 1) for k in row]))]
            found = np.unique(corners[corners > 0])
            if found.size != 1:
                raise DisconnectedDomainError("query stencil spans several interior components")

    def evaluate(self, p: PointLike) -> Union[float, FloatArray]:
        """Multilinear interpolation of the nodal solution."""
        arr = np.asarray(p, dtype=np.float64)
        pts = np.atleast_2d(arr)
        self._check_query(pts)
        interp = RegularGridInterpolator(self.raster.axes, self.values, method="linear")
        out = interp(pts)
        return float(out[0]) if arr.ndim == 1 else out


def solve_dirichlet(
    rd: RasterDomain, tol: float = DEFAULT_TOL, omega: Optional[float] = None, initial: Optional[np.ndarray] = None
) -> FdSolution:
    interior = rd.interior
    if not np.any(interior):
        raise DisconnectedDomainError("raster has no interior nodes")
    labels, count = ndimage.label(interior)
    touching = ndimage.binary_dilation(rd.mask == NODE_OUTER) & interior
    isolated = count - np.unique(labels[touching]).size
    if isolated:
        logger.warning(f"{isolated} interior component(s) never reach the outer sphere; they solve to 0")

    n_across = max(rd.shape)
    w = omega if omega is not None else 2.0 / (1.0 + math.pi / n_across)
    u = np.where(interior, 0.0, rd.boundary_data)
    if initial is not None:
        u[interior] = initial[interior]
    grid = np.indices(rd.shape).sum(axis=0)
    colours = [interior & (grid % 2 == 0), interior & (grid % 2 == 1)]
    residual = math.inf
    sweeps = 0
    while sweeps < MAX_SWEEPS:
        for colour in colours:
            mean = _neighbour_mean(u)
            u[colour] += w * (mean[colour] - u[colour])
        sweeps += 1
        if sweeps % CHECK_EVERY == 0:
            residual = float(np.max(np.abs(_neighbour_mean(u)[interior] - u[interior])))
            if residual <= tol:
                break
    log_solver_iterations("fd", sweeps)
    if residual > tol:
        logger.error(f"FD SOR stopped at residual {residual:.3e} after {sweeps} sweeps (h={rd.h})")
        raise ConvergenceError(f"SOR residual {residual:.3e} above {tol:.1e}", achieved=residual, iterations=sweeps)
    logger.info(f"FD solve on {rd.shape} grid converged in {sweeps} sweeps, residual {residual:.2e}")
    return FdSolution(rd, u, residual, sweeps)


def harmonic_measure_fd(
    dom: Domain, target: BoundaryTarget, p: PointLike, h: float, tol: float = DEFAULT_TOL
) -> Union[float, FloatArray]:
    """Harmonic measure of `target` seen from p (a point or a batch) on the raster of spacing h."""
    return solve_dirichlet(rasterize(dom, target, h), tol).evaluate(p)


@dataclass(frozen=True)
class FdEstimate:
    value: Union[float, FloatArray]
    coarse: Union[float, FloatArray]
    error: Union[float, FloatArray]
    solution: FdSolution


def prolong(sol: FdSolution, rd: RasterDomain) -> np.ndarray:
    """Interpolate a solution onto the nodes of another raster, 0 beyond its box."""
    interp = RegularGridInterpolator(sol.raster.axes, sol.values, bounds_error=False, fill_value=0.0)
    return interp(rd.node_points()).reshape(rd.shape)


def harmonic_measure_fd_with_error(
    dom: Domain, target: BoundaryTarget, p: PointLike, h: float, tol: float = DEFAULT_TOL
) -> FdEstimate:
    """Solve at 2h, then at h starting from the prolonged coarse field.

    The O(h) error at h is estimated by |u_h - u_2h|.
    """
    rough = solve_dirichlet(rasterize(dom, target, 2.0 * h), tol)
    coarse = rough.evaluate(p)
    rd = rasterize(dom, target, h)
    fine = solve_dirichlet(rd, tol, initial=prolong(rough, rd))
    value = fine.evaluate(p)
    error = np.abs(np.asarray(value) - np.asarray(coarse))
    return FdEstimate(value, coarse, float(error) if error.ndim == 0 else error, fine)


def dump_solution(sol: FdSolution, prefix: str) -> Tuple[str, str]:
    """Write <prefix>.bin (little-endian float64, C order) and <prefix>.txt (shape, h, bounding box)."""
    rd = sol.raster
    bin_path, header_path = f"{prefix}.bin", f"{prefix}.txt"
    directory = os.path.dirname(prefix)
    if directory:
        os.makedirs(directory, exist_ok=True)
    sol.values.astype("<f8").tofile(bin_path)
    hi = rd.lo + rd.h * (np.array(rd.shape) - 1)
    with open(header_path, "w") as f:
        f.write(f"dimension {rd.mask.ndim}\n")
        f.write("shape " + " ".join(str(n) for n in rd.shape) + "\n")
        f.write(f"h {rd.h!r}\n")
        f.write("lo " + " ".join(repr(float(x)) for x in rd.lo) + "\n")
        f.write("hi " + " ".join(repr(float(x)) for x in hi) + "\n")
    return bin_path, header_path
