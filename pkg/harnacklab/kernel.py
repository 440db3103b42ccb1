"""Dimension constants, the Poisson kernel of the unit ball and the cone-exit function h_beta.

h_beta(x) = P^x(X exits B(0,1) through the cap A_beta) is evaluated by adaptive
Gauss-Kronrod quadrature (QUADPACK through scipy.integrate.quad), reduced to
one polar angle on the axis and to (polar, azimuth) elsewhere using the
rotational symmetry about the plane spanned by x and e_1.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from .errors import ConvergenceError, GeometryError
from .geometry import FloatArray, PointLike, as_point

logger = logging.getLogger(__name__)

INEQUALITY_SLACK = 1e-12
DEFAULT_TOL = 1e-8
QUAD_LIMIT = 200

ArrayOrFloat = Union[float, FloatArray]


@lru_cache(maxsize=32)
def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n (n = 1 gives the two-point sphere, area 2)."""
    return float(2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0))


@dataclass(frozen=True)
class DimensionConstants:
    d: int
    kappa_d: float
    alpha_d: float
    omega_dm1: float

    @classmethod
    def for_dimension(cls, d: int) -> "DimensionConstants":
        if d < 2:
            raise ValueError(f"dimension must be >= 2, got {d}")
        kappa = 1.0 / math.sqrt(4.0 * (d + 2))
        return cls(d=d, kappa_d=kappa, alpha_d=math.asin(kappa), omega_dm1=sphere_area(d))


def cap_area(beta: float, d: int) -> float:
    """sigma_d of {y in dB : angle(y, e_1) < beta} = omega_{d-2} * int_0^beta sin^{d-2}."""
    if not 0 < beta <= math.pi:
        raise ValueError(f"cap angle must lie in (0, pi], got {beta}")
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    if d == 2:
        return 2.0 * beta
    value, _ = quad(lambda t: math.sin(t) ** (d - 2), 0.0, beta, epsabs=1e-14, epsrel=1e-13, limit=QUAD_LIMIT)
    return sphere_area(d - 1) * float(value)


@dataclass(frozen=True)
class CapSpec:
    beta: float
    d: int
    kappa_beta: float
    area: float

    @classmethod
    def build(cls, beta: float, d: int, allow_wide: bool = False) -> "CapSpec":
        """Cap A_beta; beta above alpha_d needs allow_wide (monotone in the cone angle)."""
        constants = DimensionConstants.for_dimension(d)
        if not 0 < beta <= math.pi / 2:
            raise ValueError(f"beta must lie in (0, pi/2], got {beta}")
        if beta > constants.alpha_d and not allow_wide:
            raise ValueError(f"beta={beta} exceeds alpha_d={constants.alpha_d} for d={d}")
        return cls(beta=beta, d=d, kappa_beta=math.sin(beta), area=cap_area(beta, d))

    @classmethod
    def default(cls, d: int) -> "CapSpec":
        return cls.build(DimensionConstants.for_dimension(d).alpha_d / 2.0, d)

    @property
    def h_at_origin(self) -> float:
        """c_beta = h_beta(0) = sigma_d(A_beta) / omega_{d-1}."""
        return self.area / sphere_area(self.d)


def poisson_eval(x: PointLike, y: PointLike, d: int) -> ArrayOrFloat:
    """omega_{d-1}^{-1} (1 - |x|^2) / |x - y|^d for y on the unit sphere (one point or a batch)."""
    xp = as_point(x)
    if xp.size != d:
        raise GeometryError(f"x has dimension {xp.size}, expected {d}")
    r2 = float(xp @ xp)
    if r2 >= 1.0:
        raise ValueError(f"x must lie inside the unit ball, |x| = {math.sqrt(r2)}")
    ys = np.asarray(y, dtype=np.float64)
    single = ys.ndim == 1
    ys = np.atleast_2d(ys)
    if np.any(np.abs(np.linalg.norm(ys, axis=1) - 1.0) > 1e-12):
        raise ValueError("y must lie on the unit sphere")
    dist = np.linalg.norm(ys - xp, axis=1)
    out = (1.0 - r2) / dist**d / sphere_area(d)
    return float(out[0]) if single else out


def _integrate(func: Callable[[float], float], lo: float, hi: float, tol: float) -> tuple[float, float]:
    value, abserr = quad(func, lo, hi, epsabs=tol, epsrel=0.0, limit=QUAD_LIMIT)
    return float(value), float(abserr)


def h_beta_quad(x: PointLike, cap: CapSpec, tol: float = DEFAULT_TOL) -> float:
    xp = as_point(x)
    d = cap.d
    if xp.size != d:
        raise GeometryError(f"x has dimension {xp.size}, cap is for dimension {d}")
    a = float(xp[0])
    b = float(np.linalg.norm(xp[1:]))
    r2 = a * a + b * b
    if r2 >= 1.0:
        raise ValueError(f"x must lie inside the unit ball, |x| = {math.sqrt(r2)}")
    pref = (1.0 - r2) / sphere_area(d)
    half_power = d / 2.0

    if b == 0.0:
        ring = sphere_area(d - 1)

        def axial(theta: float) -> float:
            return pref * ring * math.sin(theta) ** (d - 2) / (1.0 + r2 - 2.0 * a * math.cos(theta)) ** half_power

        value, abserr = _integrate(axial, 0.0, cap.beta, tol)
    elif d == 2:

        def planar(theta: float) -> float:
            return pref / (1.0 + r2 - 2.0 * (a * math.cos(theta) + b * math.sin(theta)))

        value, abserr = _integrate(planar, -cap.beta, cap.beta, tol)
    else:
        ring = sphere_area(d - 2)
        inner_tol = 0.1 * tol

        def azimuthal(theta: float) -> float:
            ct, st = math.cos(theta), math.sin(theta)

            def inner(phi: float) -> float:
                denom = 1.0 + r2 - 2.0 * (a * ct + b * st * math.cos(phi))
                return ring * math.sin(phi) ** (d - 3) / denom**half_power

            inner_value, _ = _integrate(inner, 0.0, math.pi, inner_tol / max(pref, 1e-300))
            return pref * st ** (d - 2) * inner_value

        value, abserr = _integrate(azimuthal, 0.0, cap.beta, tol)

    if not abserr <= tol:
        logger.error(f"h_beta quadrature at x={xp.tolist()} stopped at error {abserr:.3e} > tol {tol:.1e}")
        raise ConvergenceError(f"quadrature error {abserr:.3e} exceeds tolerance {tol:.1e}", achieved=abserr)
    return min(1.0, max(0.0, value))


def h_beta_x2_derivative(x2: float, cap: CapSpec, step: float = 1e-4, tol: float = 1e-11) -> float:
    """Central difference of h_beta along e_2 at (0, x2, 0, ...)."""
    if not (0 <= x2 and x2 + step < 1):
        raise ValueError(f"x2 must lie in [0, 1 - step), got x2={x2}, step={step}")
    e2 = np.zeros(cap.d)
    e2[1] = 1.0
    return (h_beta_quad((x2 + step) * e2, cap, tol) - h_beta_quad((x2 - step) * e2, cap, tol)) / (2.0 * step)


def strip_bound(cap: CapSpec, n: int) -> float:
    """c_d / 2n + h_beta(0) (n - 1) / n: the equal-measure strip bound on B^-, tending to h_beta(0)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    const = DimensionConstants.for_dimension(cap.d)
    c_d = 2.0 * cap_area(const.alpha_d, cap.d) / (const.omega_dm1 * (1.0 - 2.0 * const.kappa_d**2) ** (cap.d / 2.0))
    return c_d / (2.0 * n) + cap.h_at_origin * (n - 1) / n


def _check_unit_interval(name: str, values: FloatArray, upper: float) -> None:
    if np.any(values < 0.0) or np.any(values > upper):
        raise ValueError(f"{name} must lie in [0, kappa_d={upper}]")


def modified_poisson_gap(d: int, x: ArrayOrFloat) -> ArrayOrFloat:
    """g(x) - f(x) for f = (k-x)/(k+x) and g = [(1+x^2-2xk)/(1+x^2+2xk)]^{1+d/2}, k = kappa_d."""
    kappa = DimensionConstants.for_dimension(d).kappa_d
    xs = np.asarray(x, dtype=np.float64)
    _check_unit_interval("x", xs, kappa)
    f = (kappa - xs) / (kappa + xs)
    g = ((1.0 + xs**2 - 2.0 * xs * kappa) / (1.0 + xs**2 + 2.0 * xs * kappa)) ** (1.0 + d / 2.0)
    gap = g - f
    return float(gap) if gap.ndim == 0 else gap


def reflection_sum(d: int, x: ArrayOrFloat, z: ArrayOrFloat) -> ArrayOrFloat:
    """(1-x^2)/(1+x^2-2xz)^{d/2} + (1-x^2)/(1+x^2+2xz)^{d/2}; bounded by 2 on [0, kappa_d]^2."""
    kappa = DimensionConstants.for_dimension(d).kappa_d
    xs = np.asarray(x, dtype=np.float64)
    zs = np.asarray(z, dtype=np.float64)
    _check_unit_interval("x", xs, kappa)
    _check_unit_interval("z", zs, kappa)
    num = 1.0 - xs**2
    value = num / (1.0 + xs**2 - 2.0 * xs * zs) ** (d / 2.0) + num / (1.0 + xs**2 + 2.0 * xs * zs) ** (d / 2.0)
    return float(value) if value.ndim == 0 else value


def arc_harmonic_measure(z: PointLike, theta_lo: float, theta_hi: float) -> float:
    """Harmonic measure of the arc (theta_lo, theta_hi) of the unit circle seen from z, |z| < 1."""
    zp = as_point(z)
    w = complex(zp[0], zp[1])
    if abs(w) >= 1.0:
        raise ValueError("z must lie inside the unit disc")
    if not 0 < theta_hi - theta_lo < 2 * math.pi:
        raise ValueError("arc must have length in (0, 2 pi)")
    ratio = (np.exp(1j * theta_hi) - w) / (np.exp(1j * theta_lo) - w)
    swept = float(np.mod(np.angle(ratio), 2 * math.pi))
    return swept / math.pi - (theta_hi - theta_lo) / (2 * math.pi)


def annulus_hit_probability(r_start: float, delta: float, d: int) -> float:
    """P(Brownian motion from |y| = r_start reaches |x| = delta before |x| = 1)."""
    if not 0 < delta < r_start < 1:
        raise ValueError("need 0 < delta < r_start < 1")
    if d == 2:
        return math.log(r_start) / math.log(delta)
    return (r_start ** (2 - d) - 1.0) / (delta ** (2 - d) - 1.0)
