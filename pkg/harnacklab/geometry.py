"""Points, obstacle primitives, the domain D = B(c, R) - K, and cones.

Every distance here is exact for its primitive; walk-on-spheres step radii and
the raster/graph builders all rely on that.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from .errors import GeometryError

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]
Point = FloatArray
PointLike = Union[Sequence[float], FloatArray]

MIN_DIMENSION = 2
MAX_DIMENSION = 10


def as_point(coords: PointLike) -> Point:
    p = np.asarray(coords, dtype=np.float64)
    if p.ndim != 1:
        raise GeometryError(f"A point must be a flat coordinate list, got shape {p.shape}")
    return p


def _as_batch(points: PointLike) -> Tuple[FloatArray, bool]:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise GeometryError(f"Expected a point or an (n, d) batch of points, got shape {arr.shape}")
    return arr, False


def _check_dimension(d: int) -> None:
    if not MIN_DIMENSION <= d <= MAX_DIMENSION:
        raise GeometryError(f"Dimension {d} outside supported range {MIN_DIMENSION}..{MAX_DIMENSION}")


def _segment_closest(pts: FloatArray, a: FloatArray, b: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """Distances from each row of pts to segment [a, b] and the closest segment points."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        t = np.zeros(pts.shape[0])
    else:
        t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(pts - closest, axis=1), closest


def _thicken(pts: FloatArray, closest: FloatArray, dist: FloatArray, thickness: float) -> FloatArray:
    """Nearest points of the radius-`thickness` neighbourhood of a set, given nearest core points."""
    if thickness == 0.0:
        return closest
    out = pts.copy()
    outside = dist > thickness
    direction = (pts[outside] - closest[outside]) / dist[outside, None]
    out[outside] = closest[outside] + thickness * direction
    return out


class ObstacleShape(ABC):
    """A closed primitive set contributing to K."""

    kind: str = ""

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @abstractmethod
    def distance(self, pts: FloatArray) -> FloatArray:
        """Exact Euclidean distance from each row of an (n, d) array to the shape."""

    @abstractmethod
    def nearest(self, pts: FloatArray) -> FloatArray:
        """Closest shape point for each row of an (n, d) array."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]: ...

    def nearest_point(self, p: PointLike) -> Point:
        return self.nearest(as_point(p)[None, :])[0]


@dataclass(frozen=True)
class BallObstacle(ObstacleShape):
    center: Tuple[float, ...]
    radius: float
    kind = "ball"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"ball radius must be finite and > 0, got {self.radius}")

    @cached_property
    def _c(self) -> FloatArray:
        return np.asarray(self.center, dtype=np.float64)

    @property
    def dimension(self) -> int:
        return len(self.center)

    def distance(self, pts: FloatArray) -> FloatArray:
        return np.maximum(0.0, np.linalg.norm(pts - self._c, axis=1) - self.radius)

    def nearest(self, pts: FloatArray) -> FloatArray:
        offset = pts - self._c
        norm = np.linalg.norm(offset, axis=1)
        out = pts.copy()
        outside = norm > self.radius
        out[outside] = self._c + self.radius * offset[outside] / norm[outside, None]
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class SegmentObstacle(ObstacleShape):
    a: Tuple[float, ...]
    b: Tuple[float, ...]
    thickness: float = 0.0
    kind = "segment"

    def __post_init__(self) -> None:
        if len(self.a) != len(self.b):
            raise ValueError("segment endpoints have different dimensions")
        if not (math.isfinite(self.thickness) and self.thickness >= 0):
            raise ValueError(f"segment thickness must be finite and >= 0, got {self.thickness}")

    @property
    def dimension(self) -> int:
        return len(self.a)

    def distance(self, pts: FloatArray) -> FloatArray:
        dist, _ = _segment_closest(pts, np.asarray(self.a, dtype=float), np.asarray(self.b, dtype=float))
        return np.maximum(0.0, dist - self.thickness)

    def nearest(self, pts: FloatArray) -> FloatArray:
        dist, closest = _segment_closest(pts, np.asarray(self.a, dtype=float), np.asarray(self.b, dtype=float))
        return _thicken(pts, closest, dist, self.thickness)

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, "a": list(self.a), "b": list(self.b), "thickness": self.thickness}


@dataclass(frozen=True)
class PolylineObstacle(ObstacleShape):
    vertices: Tuple[Tuple[float, ...], ...]
    thickness: float = 0.0
    kind = "polyline"

    def __post_init__(self) -> None:
        if len(self.vertices) < 2:
            raise ValueError("polyline needs at least 2 vertices")
        if len({len(v) for v in self.vertices}) != 1:
            raise ValueError("polyline vertices have mixed dimensions")
        if not (math.isfinite(self.thickness) and self.thickness >= 0):
            raise ValueError(f"polyline thickness must be finite and >= 0, got {self.thickness}")

    @cached_property
    def _v(self) -> FloatArray:
        return np.asarray(self.vertices, dtype=np.float64)

    @property
    def dimension(self) -> int:
        return len(self.vertices[0])

    def _core(self, pts: FloatArray) -> Tuple[FloatArray, FloatArray]:
        best = np.full(pts.shape[0], np.inf)
        best_pts = np.zeros_like(pts)
        v = self._v
        for k in range(len(v) - 1):
            dist, closest = _segment_closest(pts, v[k], v[k + 1])
            better = dist < best
            best = np.where(better, dist, best)
            best_pts[better] = closest[better]
        return best, best_pts

    def distance(self, pts: FloatArray) -> FloatArray:
        dist, _ = self._core(pts)
        return np.maximum(0.0, dist - self.thickness)

    def nearest(self, pts: FloatArray) -> FloatArray:
        dist, closest = self._core(pts)
        return _thicken(pts, closest, dist, self.thickness)

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, "vertices": [list(v) for v in self.vertices], "thickness": self.thickness}


@dataclass(frozen=True)
class HyperplaneDisc(ObstacleShape):
    """Flat annulus {x : x_axis = c_axis, inner_radius <= |x - c| <= radius}.

    With inner_radius = delta this is the punctured disc (B ∩ H_0) - B(0, delta).
    """

    center: Tuple[float, ...]
    axis: int
    radius: float
    inner_radius: float = 0.0
    kind = "hyperplane_disc"

    def __post_init__(self) -> None:
        if not 0 <= self.axis < len(self.center):
            raise ValueError(f"normal axis {self.axis} out of range for dimension {len(self.center)}")
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"disc radius must be finite and > 0, got {self.radius}")
        if not 0 <= self.inner_radius < self.radius:
            raise ValueError(f"excluded inner radius must lie in [0, radius), got {self.inner_radius}")

    @cached_property
    def _c(self) -> FloatArray:
        return np.asarray(self.center, dtype=np.float64)

    @property
    def dimension(self) -> int:
        return len(self.center)

    def _split(self, pts: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
        offset = pts - self._c
        normal = offset[:, self.axis].copy()
        in_plane = offset.copy()
        in_plane[:, self.axis] = 0.0
        return normal, in_plane, np.linalg.norm(in_plane, axis=1)

    def distance(self, pts: FloatArray) -> FloatArray:
        normal, _, rho = self._split(pts)
        radial_gap = rho - np.clip(rho, self.inner_radius, self.radius)
        return np.sqrt(normal**2 + radial_gap**2)

    def nearest(self, pts: FloatArray) -> FloatArray:
        _, in_plane, rho = self._split(pts)
        target = np.clip(rho, self.inner_radius, self.radius)
        direction = np.zeros_like(in_plane)
        nonzero = rho > 0
        direction[nonzero] = in_plane[nonzero] / rho[nonzero, None]
        # any in-plane direction is nearest from the disc's own axis
        fallback = (self.axis + 1) % self.dimension
        direction[~nonzero, fallback] = 1.0
        return self._c + target[:, None] * direction

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": self.kind,
            "center": list(self.center),
            "axis": self.axis,
            "radius": self.radius,
            "inner_radius": self.inner_radius,
        }


def obstacle_from_dict(spec: Dict[str, Any]) -> ObstacleShape:
    """Build a primitive from its config record; raises ValueError/KeyError/TypeError on bad input."""
    kind = spec.get("type")
    allowed = {
        "ball": {"type", "center", "radius"},
        "segment": {"type", "a", "b", "thickness"},
        "polyline": {"type", "vertices", "thickness"},
        "hyperplane_disc": {"type", "center", "axis", "radius", "inner_radius"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown obstacle type {kind!r}; expected one of {sorted(allowed)}")
    unknown = set(spec) - allowed[kind]
    if unknown:
        raise ValueError(f"unknown keys for {kind}: {sorted(unknown)}")
    if kind == "ball":
        return BallObstacle(tuple(map(float, spec["center"])), float(spec["radius"]))
    if kind == "segment":
        return SegmentObstacle(
            tuple(map(float, spec["a"])), tuple(map(float, spec["b"])), float(spec.get("thickness", 0.0))
        )
    if kind == "polyline":
        return PolylineObstacle(
            tuple(tuple(map(float, v)) for v in spec["vertices"]), float(spec.get("thickness", 0.0))
        )
    return HyperplaneDisc(
        tuple(map(float, spec["center"])),
        int(spec["axis"]),
        float(spec["radius"]),
        float(spec.get("inner_radius", 0.0)),
    )


@dataclass(frozen=True)
class Domain:
    """D = B(center, outer_radius) - K with K a union of exact primitives.

    Only K within the closed ball matters. obstacle_distance is exact to all of K;
    a point of K outside the ball lies farther from any interior point than the
    sphere does, so boundary distances and step radii equal those for K clipped
    to the ball. Grids mark obstacle nodes inside the ball only.
    """

    dimension: int
    obstacles: Tuple[ObstacleShape, ...] = ()
    outer_radius: float = 1.0
    center: Optional[Tuple[float, ...]] = None
    _center: FloatArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _check_dimension(self.dimension)
        if not (math.isfinite(self.outer_radius) and self.outer_radius > 0):
            raise GeometryError(f"outer radius must be finite and > 0, got {self.outer_radius}")
        center = np.zeros(self.dimension) if self.center is None else np.asarray(self.center, dtype=np.float64)
        if center.shape != (self.dimension,):
            raise GeometryError(f"domain center has dimension {center.size}, domain has {self.dimension}")
        object.__setattr__(self, "_center", center)
        clipped = []
        for shape in self.obstacles:
            if shape.dimension != self.dimension:
                raise GeometryError(
                    f"{shape.kind} obstacle has dimension {shape.dimension}, domain has {self.dimension}"
                )
            if isinstance(shape, HyperplaneDisc):
                reach = self.outer_radius + float(np.linalg.norm(shape._c - center))
                if shape.radius > reach and shape.inner_radius < reach:
                    shape = replace(shape, radius=reach)
            clipped.append(shape)
        object.__setattr__(self, "obstacles", tuple(clipped))

    @property
    def center_point(self) -> Point:
        return self._center.copy()

    def local(self, center: PointLike, radius: float) -> "Domain":
        """B(center, radius) - K, sharing this domain's obstacles."""
        return Domain(self.dimension, self.obstacles, radius, tuple(float(c) for c in as_point(center)))

    def _check(self, pts: FloatArray) -> None:
        if pts.shape[1] != self.dimension:
            raise GeometryError(f"point dimension {pts.shape[1]} does not match domain dimension {self.dimension}")

    def obstacle_distance(self, pts: FloatArray) -> FloatArray:
        if not self.obstacles:
            return np.full(pts.shape[0], np.inf)
        out = self.obstacles[0].distance(pts)
        for shape in self.obstacles[1:]:
            out = np.minimum(out, shape.distance(pts))
        return out

    def sphere_distance(self, pts: FloatArray) -> FloatArray:
        return self.outer_radius - np.linalg.norm(pts - self._center, axis=1)

    def boundary_distance(self, pts: FloatArray) -> FloatArray:
        """min(R - |p - c|, d(p, K)); negative outside the ball."""
        return np.minimum(self.sphere_distance(pts), self.obstacle_distance(pts))

    def nearest_obstacle_point(self, p: PointLike) -> Point:
        q = as_point(p)[None, :]
        self._check(q)
        if not self.obstacles:
            raise GeometryError("domain has no obstacles")
        dists = [float(s.distance(q)[0]) for s in self.obstacles]
        return self.obstacles[int(np.argmin(dists))].nearest(q)[0]


def dist_to_obstacles(p: PointLike, dom: Domain) -> Union[float, FloatArray]:
    """Exact distance to K (0 on K, inf when K is empty); accepts a point or an (n, d) batch.

    Where this exceeds the sphere distance the nearest part of the boundary is the
    sphere, so min(dist, R - |p - c|) is the distance to the boundary of D.
    """
    pts, single = _as_batch(p)
    dom._check(pts)
    out = dom.obstacle_distance(pts)
    return float(out[0]) if single else out


def wos_radius(p: PointLike, dom: Domain) -> Union[float, FloatArray]:
    """Radius of the largest ball centred at p inside D."""
    pts, single = _as_batch(p)
    dom._check(pts)
    sphere = dom.sphere_distance(pts)
    if np.any(sphere < 0):
        raise GeometryError("point outside the closed outer ball")
    out = np.minimum(sphere, dom.obstacle_distance(pts))
    return float(out[0]) if single else out


def project_pi1(p: PointLike, axis: int = 0) -> Union[Point, FloatArray]:
    """Keep only the axis coordinate (x_1 by default); zero the rest."""
    arr = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(arr)
    out[..., axis] = arr[..., axis]
    return out


@dataclass(frozen=True)
class ConeSpec:
    """W_alpha = {z : |z - pi(z)| < s z_axis tan(alpha)} with s = direction (+1 or -1)."""

    half_angle: float
    axis: int = 0
    direction: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.half_angle <= math.pi / 2:
            raise ValueError(f"cone half-angle must lie in (0, pi/2], got {self.half_angle}")
        if self.direction not in (1, -1):
            raise ValueError(f"cone direction must be +1 or -1, got {self.direction}")


def in_cone(p: PointLike, cone: ConeSpec) -> Union[bool, BoolArray]:
    pts, single = _as_batch(p)
    along = cone.direction * pts[:, cone.axis]
    perp = pts.copy()
    perp[:, cone.axis] = 0.0
    perp_norm = np.sqrt(np.sum(perp**2, axis=1))
    if cone.half_angle == math.pi / 2:
        inside = along > 0
    else:
        inside = (along > 0) & (perp_norm < along * math.tan(cone.half_angle))
    return bool(inside[0]) if single else inside
