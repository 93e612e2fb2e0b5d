"""Complex special functions used by the determinant formulas.

Polylogarithms of half-integer order on the unit disk, the kernel exponents
A1, A2, B, the boundary-layer function h(w, z), the wrapped Gaussian heat
kernel on the circle R / rho Z, and the theta sum c(rho).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcx, roots_legendre

from .errors import ConvergenceError, DomainError

DEFAULT_TOL = 1e-10
MAX_TERMS = 10**7
_ORDERS = (0.5, 1.5, 2.5)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _check_order(s) -> float:
    s = float(s)
    if s not in _ORDERS:
        raise DomainError(f"polylog order must be one of {_ORDERS}, got {s}")
    return s


def _check_disk(z, name="z"):
    z = np.asarray(z, dtype=complex)
    if z.size and not np.all(np.isfinite(z)):
        raise DomainError(f"{name} must be finite")
    if z.size and np.max(np.abs(z)) >= 1.0:
        raise DomainError(f"|{name}| must be < 1, got max {np.max(np.abs(z)):.6g}")
    return z


def _n_terms(r: float, tol: float, s: float = 0.0, cap: int = MAX_TERMS) -> int:
    """Smallest N with sum_{n>N} r^n n^{-s} <= tol (geometric tail bound)."""
    if r == 0.0:
        return 0
    if r >= 1.0:
        raise DomainError("modulus must be < 1")
    # r^{N+1} / (1 - r) <= tol is sufficient since n^{-s} <= 1
    n = math.log(tol * (1.0 - r)) / math.log(r) - 1.0
    n = max(1, int(math.ceil(n)))
    if n > cap:
        raise ConvergenceError(f"tolerance {tol:g} needs {n} terms at |z|={r:.6g} (cap {cap})")
    return n


def _unwrap(out, scalar):
    return complex(out) if scalar else out


def polylog(s, z, tol: float = DEFAULT_TOL, max_terms: int = MAX_TERMS):
    """Polylogarithm Li_s(z) = sum_{n>=1} z^n / n^s for |z| < 1.

    Direct power series with Kahan-compensated accumulation. Works
    elementwise on arrays.

    Args:
        s: order, one of 1/2, 3/2, 5/2.
        z: complex scalar or array with |z| < 1.
        tol: absolute error bound.
        max_terms: hard cap on the number of series terms.

    Returns:
        complex scalar or array shaped like ``z``.
    """
    s = _check_order(s)
    scalar = np.ndim(z) == 0
    z = _check_disk(z)
    rmax = float(np.max(np.abs(z))) if z.size else 0.0
    nmax = _n_terms(rmax, tol, s, max_terms)
    total = np.zeros(z.shape, complex)
    comp = np.zeros(z.shape, complex)
    zn = np.ones(z.shape, complex)
    for n in range(1, nmax + 1):
        zn = zn * z
        y = zn / n**s - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return _unwrap(total, scalar)


def A1(z, tol: float = DEFAULT_TOL):
    """A_1(z) = -Li_{3/2}(z) / sqrt(2 pi)."""
    return -polylog(1.5, z, tol) / _SQRT2PI


def A2(z, tol: float = DEFAULT_TOL):
    """A_2(z) = -Li_{5/2}(z) / sqrt(2 pi)."""
    return -polylog(2.5, z, tol) / _SQRT2PI


def Bfun(z, zp, tol: float = DEFAULT_TOL):
    """B(z, z') = (1/4pi) sum_{k,k'>=1} z^k z'^k' / ((k+k') sqrt(k k')).

    The double series is truncated by geometric tail bounds in each index and
    contracted against the coefficient matrix. Broadcasts over ``z`` and ``zp``.
    """
    scalar = np.ndim(z) == 0 and np.ndim(zp) == 0
    z = _check_disk(z)
    zp = _check_disk(zp, "z'")
    z, zp = np.broadcast_arrays(z, zp)
    r1 = float(np.max(np.abs(z))) if z.size else 0.0
    r2 = float(np.max(np.abs(zp))) if zp.size else 0.0
    if r1 == 0.0 or r2 == 0.0:
        return _unwrap(np.zeros(z.shape, complex), scalar)
    # |B tail| <= r^{K+1}/(1-r) * r'/(1-r') / (4 pi) in each direction
    k1 = _n_terms(r1, tol * (1 - r2) / max(r2, 1e-300) * 4 * math.pi)
    k2 = _n_terms(r2, tol * (1 - r1) / max(r1, 1e-300) * 4 * math.pi)
    k = np.arange(1, k1 + 1)
    kp = np.arange(1, k2 + 1)
    coef = 1.0 / ((k[:, None] + kp[None, :]) * np.sqrt(k[:, None] * kp[None, :]))
    pz = z[..., None] ** k
    pzp = zp[..., None] ** kp
    out = np.einsum("...k,kl,...l->...", pz, coef, pzp) / (4.0 * math.pi)
    return _unwrap(out, scalar)


# ---------------------------------------------------------------------------
# boundary-layer function h(w, z)

_GL_X, _GL_W = roots_legendre(16)


def _h_series(w, z, tol):
    # integrate Li_{1/2} term by term along the horizontal path:
    # int_{-inf}^{w} e^{n(w^2-y^2)/2} dy = sqrt(pi/(2n)) erfcx(-w sqrt(n/2))
    rmax = float(np.max(np.abs(z))) if z.size else 0.0
    nmax = _n_terms(rmax, tol)
    total = np.zeros(np.broadcast_shapes(w.shape, z.shape), complex)
    zn = np.ones(z.shape, complex)
    for n in range(1, nmax + 1):
        zn = zn * z
        total = total + (zn / n) * erfcx(-w * math.sqrt(n / 2.0))
    return -0.5 * total


def _h_quad_scalar(w: complex, z: complex, tol: float) -> complex:
    if z == 0:
        return 0j
    a = -w.real
    az = abs(z)
    width = 1.0
    while az * math.exp(-(2 * a * width + width * width) / 2) * width > tol * 1e-3:
        width += 1.0
    edges = np.arange(0.0, width + 0.5)  # panels of width 1, measured leftwards
    xs = []
    ws = []
    for lo in edges[:-1]:
        xs.append(w.real - lo - 0.5 - 0.5 * _GL_X)
        ws.append(0.5 * _GL_W)
    x = np.concatenate(xs)
    wt = np.concatenate(ws)
    y = x + 1j * w.imag
    arg = z * np.exp((w * w - y * y) / 2.0)
    vals = polylog(0.5, arg, tol * 1e-3)
    return complex(-np.dot(wt, vals) / _SQRT2PI)


def h_left(w, z, tol: float = DEFAULT_TOL, method: str = "series"):
    """h(w, z) = -(1/sqrt(2pi)) int_{-inf}^{w} Li_{1/2}(z e^{(w^2-y^2)/2}) dy, Re w < 0.

    The path is horizontal at height Im w. ``method="series"`` integrates the
    polylog series term by term in closed form (scaled complementary error
    function); ``method="quadrature"`` uses composite Gauss-Legendre panels of
    width 1 on a truncated interval. Both broadcast over ``w`` and ``z``.
    """
    scalar = np.ndim(w) == 0 and np.ndim(z) == 0
    w = np.asarray(w, dtype=complex)
    z = _check_disk(z)
    if w.size and np.any(w.real >= 0):
        raise DomainError("h_left requires Re(w) < 0")
    if method == "series":
        out = _h_series(w, z, tol)
    elif method == "quadrature":
        wb, zb = np.broadcast_arrays(w, z)
        out = np.empty(wb.shape, complex)
        for idx in np.ndindex(wb.shape):
            out[idx] = _h_quad_scalar(complex(wb[idx]), complex(zb[idx]), tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _unwrap(out, scalar)


def h_right(w, z, tol: float = DEFAULT_TOL, method: str = "series"):
    """h for Re w > 0, defined by the reflection h(w, z) = h_left(-w, z)."""
    w = np.asarray(w, dtype=complex) if np.ndim(w) else complex(w)
    if np.any(np.real(w) <= 0):
        raise DomainError("h_right requires Re(w) > 0")
    return h_left(-w, z, tol, method)


# ---------------------------------------------------------------------------
# circle R / rho Z

@dataclass(frozen=True, eq=False)
class CirclePoint:
    """A point of the circle R / rho Z stored by its representative in [0, rho)."""

    representative: float
    rho: float
    _slack: float = field(default=1e-14, repr=False)

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError("circle period must be positive")
        x = math.fmod(float(self.representative), self.rho)
        if x < 0:
            x += self.rho
        if x >= self.rho:
            x = 0.0
        object.__setattr__(self, "representative", x)

    def __eq__(self, other):
        if not isinstance(other, CirclePoint):
            return NotImplemented
        if self.rho != other.rho:
            return False
        d = abs(self.representative - other.representative)
        return min(d, self.rho - d) <= self._slack * self.rho

    __hash__ = None


def circle_distance(x, y, rho: float):
    """Arc distance on R / rho Z, vectorised over real representatives."""
    d = np.asarray(x, float) - np.asarray(y, float)
    # subtracting the nearest multiple keeps tiny offsets exact (mod would round them to rho)
    return np.abs(d - rho * np.round(d / rho))


def dist_circle(x: CirclePoint, y: CirclePoint) -> float:
    """min_k |x - y + k rho|, in [0, rho/2]."""
    if x.rho != y.rho:
        raise DomainError(f"mismatched periods {x.rho} and {y.rho}")
    return float(circle_distance(x.representative, y.representative, x.rho))


def gaussian_density(x, t):
    """phi_t(x) = exp(-x^2/(2t)) / sqrt(2 pi t)."""
    x = np.asarray(x, float)
    return np.exp(-x * x / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def wrapped_gaussian(x, t: float, rho: float | None = None, tol: float = DEFAULT_TOL):
    """Heat kernel on the circle: sum_k phi_t(x + k rho).

    ``x`` is a CirclePoint, or real representative(s) together with ``rho``.
    Terms are added symmetrically outward until they drop below ``tol``.
    """
    if isinstance(x, CirclePoint):
        rho = x.rho
        x = x.representative
    if rho is None or not rho > 0:
        raise DomainError("wrapped_gaussian needs a positive period")
    if not t > 0:
        raise DomainError("wrapped_gaussian needs t > 0")
    scalar = np.ndim(x) == 0
    x = np.mod(np.asarray(x, float), rho)
    # centre representative in (-rho/2, rho/2]
    x = np.where(x > rho / 2, x - rho, x)
    total = gaussian_density(x, t)
    peak = 1.0 / math.sqrt(2.0 * math.pi * t)
    k = 1
    while True:
        # for |x| <= rho/2 the k-th shell is bounded by phi_t((k - 1/2) rho)
        bound = peak * math.exp(-((k - 0.5) * rho) ** 2 / (2.0 * t))
        if 2.0 * bound < tol * 1e-3:
            break
        total = total + gaussian_density(x + k * rho, t) + gaussian_density(x - k * rho, t)
        k += 1
        if k > MAX_TERMS:
            raise ConvergenceError("wrapped Gaussian sum did not converge")
    return float(total) if scalar else total


def _theta_sum(q_exp: float, tol: float) -> float:
    # 1 + 2 sum_{k>=1} exp(-q_exp k^2)
    terms = [1.0]
    k = 1
    while True:
        t = 2.0 * math.exp(-q_exp * k * k)
        terms.append(t)
        if t < tol * 1e-3:
            break
        k += 1
        if k > MAX_TERMS:
            raise ConvergenceError("theta sum did not converge")
    return math.fsum(terms)


def c_of_rho(rho: float, tol: float = DEFAULT_TOL) -> float:
    """c(rho) = sum_{k in Z} exp(-rho^2 k^2 / 2)."""
    if not rho > 0:
        raise DomainError("c_of_rho needs rho > 0")
    return _theta_sum(rho * rho / 2.0, tol)


def c_of_rho_dual(rho: float, tol: float = DEFAULT_TOL) -> float:
    """Poisson-dual form (sqrt(2pi)/rho) sum_k exp(-2 pi^2 k^2 / rho^2)."""
    if not rho > 0:
        raise DomainError("c_of_rho needs rho > 0")
    return _SQRT2PI / rho * _theta_sum(2.0 * math.pi**2 / rho**2, tol)
