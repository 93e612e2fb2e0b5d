"""Limit laws of the pinched-up field and the kernels S_inf, S_r behind them.

S_inf(a, b) is an m-fold integral over upward vertical lines of

    (-1)^{m-1} sqrt(2) / (2 pi i)^m  prod_{i>=2} 1/(xi_i - xi_{i-1})
        prod_i exp(da_i xi_i^2 - db_i xi_i)

with Re xi_1 > ... > Re xi_m. S_r replaces each line integral by the sum
over the roots of exp(-r xi) = w. Both kernels have a chain structure (each
factor couples only neighbouring levels), so every m-fold sum or integral
here is evaluated as a product of m matrices rather than over a tensor grid.

Probabilistic counterparts use Brownian transition densities on boxes,
evaluated by the same chain recursion with Gauss-Legendre panels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, NumericalQualityError
from .specfun import gaussian_density, wrapped_gaussian

_SQRT2 = math.sqrt(2.0)
LINE_NODES = 400
# Gaussian decay exp(-da y^2) is below e^{-64} at |y| = 8 / sqrt(da)
LINE_HALF_WIDTH = 8.0
POLE_CLEARANCE = 5.0
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_WINDOW = 13.0  # standard deviations kept around the Gaussian mass


def _arr(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, float))


def _deltas(a: np.ndarray) -> np.ndarray:
    return np.diff(a, prepend=0.0)


def _check_times(a: np.ndarray, name: str = "a"):
    if a.ndim != 1 or a.size == 0:
        raise DomainError(f"{name} must be a nonempty vector")
    if not (np.all(np.isfinite(a)) and a[0] > 0 and np.all(np.diff(a) > 0)):
        raise DomainError(f"{name} must satisfy 0 < {name}_1 < ... < {name}_m")


@dataclass(frozen=True)
class SArgs:
    """Arguments of S_inf / S_r: times a, levels b, and for S_r the period r
    and points w with increasing moduli."""

    a: tuple
    b: tuple
    r: float | None = None
    w: tuple | None = None

    def __post_init__(self):
        a = _arr(self.a)
        b = _arr(self.b)
        _check_times(a)
        if b.shape != a.shape or not np.all(np.isfinite(b)):
            raise DomainError("b must be a finite vector of the same length as a")
        object.__setattr__(self, "a", tuple(a))
        object.__setattr__(self, "b", tuple(b))
        if self.r is not None and not self.r > 0:
            raise DomainError("r must be positive")
        if self.w is not None:
            w = np.atleast_1d(np.asarray(self.w, complex))
            if w.shape != a.shape:
                raise DomainError("w must have one entry per level")
            mod = np.abs(w)
            if not (mod[0] > 0 and np.all(np.diff(mod) > 0)):
                raise DomainError("need 0 < |w_1| < ... < |w_m|")
            object.__setattr__(self, "w", tuple(complex(v) for v in w))

    @property
    def m(self) -> int:
        return len(self.a)


# ---------------------------------------------------------------------------
# S_inf on vertical lines

def default_abscissas(m: int) -> np.ndarray:
    """Re xi_i = 1 + (m - i) / 2, decreasing in i."""
    return 1.0 + 0.5 * (m - 1 - np.arange(m))


def _line_chain(a, b, abscissas, kernel, nodes: int):
    """Chain quadrature over vertical lines; returns the complex integral."""
    a = _arr(a)
    b = _arr(b)
    m = a.size
    c = _arr(abscissas) if abscissas is not None else default_abscissas(m)
    if c.size != m:
        raise DomainError("need one abscissa per level")
    da, db = _deltas(a), _deltas(b)
    Y = LINE_HALF_WIDTH / math.sqrt(da.min())
    if m > 1:
        # the kernel has a pole a distance gap off each line; trapezoid error
        # is about exp(-2 pi gap / step), so keep step <= gap / POLE_CLEARANCE
        gap = float(np.min(np.abs(np.diff(c))))
        nodes = max(nodes, int(math.ceil(2.0 * Y * POLE_CLEARANCE / gap)) + 1)
    y = np.linspace(-Y, Y, nodes)
    h = y[1] - y[0]
    xi = c[:, None] + 1j * y[None, :]
    # d xi = i dy cancels the i of 2 pi i
    f = np.exp(da[:, None] * xi**2 - db[:, None] * xi) * (h / (2.0 * math.pi))
    v = f[0]
    for i in range(1, m):
        d = xi[i][:, None] - xi[i - 1][None, :]
        v = (kernel(d) @ v) * f[i]
    return (-1.0) ** (m - 1) * _SQRT2 * v.sum()


def _inv(d):
    return 1.0 / d


def S_inf_quadrature(args: SArgs, line_abscissas=None, tol: float = 1e-9,
                     nodes: int = LINE_NODES, return_residual: bool = False):
    """S_inf(a, b) by trapezoid quadrature on truncated vertical lines.

    Lines sit at the given abscissas (strictly decreasing), truncated at
    |Im xi| <= 8 / sqrt(min da). The imaginary part of the result must stay
    below ``tol``.
    """
    m = args.m
    c = default_abscissas(m) if line_abscissas is None else _arr(line_abscissas)
    if c.size != m or not np.all(np.diff(c) < 0):
        raise DomainError("line abscissas must be strictly decreasing")
    val = _line_chain(args.a, args.b, c, _inv, nodes)
    if abs(val.imag) > tol:
        raise NumericalQualityError(f"S_inf imaginary residual {abs(val.imag):.3g} above {tol:.3g}")
    return (val.real, abs(val.imag)) if return_residual else val.real


def S_inf_closed_m1(a: float, b: float) -> float:
    """m = 1: S_inf((a), (b)) = phi_a(b / sqrt 2)."""
    return float(gaussian_density(b / _SQRT2, a))


# ---------------------------------------------------------------------------
# Brownian box integrals

def _panel_nodes(lo: float, hi: float, width: float):
    if not hi > lo:
        return np.empty(0), np.empty(0)
    n = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return x, w


def brownian_box_density(a, boxes, y_end: float, panel_scale: float = 0.5) -> float:
    """Integral of the Brownian path density over boxes, pinned at the end.

    Returns  P(B(a_i) in [lo_i, hi_i) for i < m | B(a_m) = y_end) * phi_{a_m}(y_end)
    for a standard Brownian motion B started at 0. ``boxes`` holds m - 1
    pairs; infinite ends are allowed. The recursion integrates one level at
    a time against Gaussian transition densities, on Gauss-Legendre panels
    of width ``panel_scale * sqrt(min da)`` covering the relevant mass.
    """
    a = _arr(a)
    _check_times(a)
    m = a.size
    if len(boxes) != m - 1:
        raise DomainError("need one box per level except the last")
    da = _deltas(a)
    if m == 1:
        return float(gaussian_density(y_end, a[0]))
    lo = np.array([float(bx[0]) for bx in boxes])
    hi = np.array([float(bx[1]) for bx in boxes])
    if np.any(hi <= lo):
        return 0.0
    # the mass sits near the bridge mean, pushed by any finite box ends
    pushes = [0.0, y_end] + [v for v in np.concatenate([lo, hi]) if np.isfinite(v)]
    top, bot = max(pushes), min(pushes)
    spread = _WINDOW * math.sqrt(a[-1])
    width = panel_scale * math.sqrt(da.min())
    grids = []
    for i in range(m - 1):
        g_lo = max(lo[i], bot - spread)
        g_hi = min(hi[i], top + spread)
        grids.append(_panel_nodes(g_lo, g_hi, width))
        if grids[-1][0].size == 0:
            return 0.0
    x, w = grids[0]
    v = gaussian_density(x, da[0]) * w
    for i in range(1, m - 1):
        xn, wn = grids[i]
        T = gaussian_density(xn[:, None] - x[None, :], da[i])
        v = (T @ v) * wn
        x = xn
    return float(np.dot(gaussian_density(y_end - x, da[-1]), v))


def S_inf_probabilistic(args: SArgs, tol: float = 1e-10) -> float:
    """P(B(a_i) >= b_i/sqrt2, i < m | B(a_m) = b_m/sqrt2) * phi_{a_m}(b_m/sqrt2)."""
    if args.m > 4:
        raise DomainError("orthant quadrature supports m <= 4; use Monte Carlo beyond")
    b = _arr(args.b) / _SQRT2
    boxes = [(bi, math.inf) for bi in b[:-1]]
    return brownian_box_density(args.a, boxes, b[-1])


def finite_r_bridge_identity(a, b, r: float, abscissas=None, tol: float = 1e-6,
                             nodes: int = LINE_NODES):
    """Both sides of the finite-r box identity for S_inf-type integrals.

    LHS: vertical-line integral with kernel (1 - e^{r d}) / d, d = xi_i - xi_{i-1}.
    RHS: P(sqrt2 B(a_i) - b_i in [0, r), i < m | sqrt2 B(a_m) = b_m) phi_{a_m}(b_m/sqrt2).
    """
    a = _arr(a)
    b = _arr(b)
    _check_times(a)
    if a.size > 3:
        raise DomainError("finite_r_bridge_identity supports m <= 3")
    if not r > 0:
        raise DomainError("r must be positive")
    lhs = _line_chain(a, b, abscissas, lambda d: -np.expm1(r * d) / d, nodes)
    if abs(lhs.imag) > tol:
        raise NumericalQualityError(f"imaginary residual {abs(lhs.imag):.3g}")
    boxes = [(bi / _SQRT2, (bi + r) / _SQRT2) for bi in b[:-1]]
    rhs = brownian_box_density(a, boxes, b[-1] / _SQRT2)
    return lhs.real, rhs


# ---------------------------------------------------------------------------
# S_r root sums

def auto_root_cutoff(a, r: float, decay: float = 40.0) -> int:
    """Smallest K with exp(-min da (2 pi K / r)^2) below e^{-decay}, plus a margin."""
    da = _deltas(_arr(a)).min()
    return int(math.ceil(r * math.sqrt(decay / da) / (2.0 * math.pi))) + 1


def _root_chain(a, b, r: float, w: np.ndarray, K: int) -> np.ndarray:
    """S_r for a batch of w points, shape (G, m) -> (G,)."""
    a, b = _arr(a), _arr(b)
    m = a.size
    da, db = _deltas(a), _deltas(b)
    k = np.arange(-K, K + 1)
    # xi_i(k) = (-Log w_i + 2 pi i k) / r
    xi = (-np.log(w)[:, :, None] + 2j * math.pi * k[None, None, :]) / r
    f = np.exp(da[None, :, None] * xi**2 - db[None, :, None] * xi)
    v = f[:, 0]
    for i in range(1, m):
        d = xi[:, i, :, None] - xi[:, i - 1, None, :]
        if np.any(np.abs(d) == 0):
            raise ZeroDivisionError("coincident roots on adjacent levels")
        v = np.einsum("gkl,gl->gk", 1.0 / d, v) * f[:, i]
    return (-1.0) ** (m - 1) * _SQRT2 / r**m * v.sum(axis=1)


def S_r_sum(args: SArgs, K: int | None = None, return_proxy: bool = False):
    """S_r(a, b; w) summed over roots xi_i(k), |k| <= K.

    The truncation proxy is the change when the outermost shell |k| = K is
    dropped from every level.
    """
    if args.r is None or args.w is None:
        raise DomainError("S_r needs r and w")
    K = auto_root_cutoff(args.a, args.r) if K is None else int(K)
    w = np.asarray(args.w, complex)[None, :]
    val = complex(_root_chain(args.a, args.b, args.r, w, K)[0])
    if not return_proxy:
        return val
    prev = complex(_root_chain(args.a, args.b, args.r, w, K - 1)[0]) if K > 0 else 0.0
    return val, abs(val - prev)


def default_w_radii(m: int, r: float) -> np.ndarray:
    """|w_i| = exp(-r (1 + (m - i)/2)), so Re xi_i matches the default lines."""
    return np.exp(-r * default_abscissas(m))


def default_w_nodes(a, r: float) -> int:
    """Nodes per w-circle. The Laurent coefficients of the integrand decay like
    exp(-(r n)^2 / (8 a)); in practice r * N ~ 64 reaches double precision."""
    n = 2 * int(math.ceil(32.0 / r))
    return max(32, n)


def critical_limit_integral(a, b, c, r: float, wradii=None, nodes: int | None = None,
                            K: int | None = None, return_residual: bool = False,
                            chunk: int = 4096):
    """(2 pi i)^{-m} closed-circle integral of S_r(a, c-b; w) S_r(a, c+b; w)
    prod_{i>=2} (1 - w_{i-1}/w_i) prod dw_i / w_i, by the trapezoid rule.

    Circles have radii ``wradii`` (strictly increasing in (0, 1)).
    """
    a, b, c = _arr(a), _arr(b), _arr(c)
    _check_times(a)
    m = a.size
    if b.size != m or c.size != m:
        raise DomainError("a, b, c must have equal length")
    if not r > 0:
        raise DomainError("r must be positive")
    R = default_w_radii(m, r) if wradii is None else _arr(wradii)
    if R.size != m or not (R[0] > 0 and R[-1] < 1 and np.all(np.diff(R) > 0)):
        raise DomainError("w radii must satisfy 0 < |w_1| < ... < |w_m| < 1")
    N = default_w_nodes(a, r) if nodes is None else int(nodes)
    K = auto_root_cutoff(a, r) if K is None else int(K)
    theta = -math.pi + math.pi / N + 2.0 * math.pi * np.arange(N) / N
    circ = np.exp(1j * theta)
    mesh = np.stack(np.meshgrid(*([np.arange(N)] * m), indexing="ij"), axis=-1).reshape(-1, m)
    total = []
    for s in range(0, mesh.shape[0], chunk):
        w = R[None, :] * circ[mesh[s:s + chunk]]
        F = _root_chain(a, c - b, r, w, K) * _root_chain(a, c + b, r, w, K)
        if m > 1:
            F = F * np.prod(1.0 - w[:, :-1] / w[:, 1:], axis=1)
        total.append(F.sum())
    val = sum(total) / N**m
    return (val.real, abs(val.imag)) if return_residual else val.real


def critical_rhs_m1(a: float, b: float, c: float, r: float) -> float:
    """phi_a(c) * phi_a^{(r)}({b})."""
    return float(gaussian_density(c, a)) * wrapped_gaussian(b, a, r)


# ---------------------------------------------------------------------------
# limit laws

def _bridge_orthant(t, lows) -> float:
    """P(B^br(t_i) >= lows_i for all i) for a standard Brownian bridge."""
    t = _arr(t)
    a = np.append(t, 1.0)
    boxes = [(lo, math.inf) for lo in _arr(lows)]
    return brownian_box_density(a, boxes, 0.0) / float(gaussian_density(0.0, 1.0))


def _circle_case_m2(t: float, x: float, h: float, r: float) -> float:
    """P(B2(t) - dist_r(B1(t), {x}) >= h) for a line bridge B2 and a bridge
    B1 on R / rZ, by mixing over the winding class of B1 at time 1."""
    sd = math.sqrt(t * (1.0 - t))
    kmax = int(math.ceil(8.0 / r)) + 1
    ks = np.arange(-kmax, kmax + 1)
    wk = gaussian_density(ks * r, 1.0) / wrapped_gaussian(0.0, 1.0, r)
    total = 0.0
    for k, wgt in zip(ks, wk):
        mean = t * k * r
        lo, hi = mean - _WINDOW * sd, mean + _WINDOW * sd
        # split panels at the kinks of the distance function
        j0 = math.floor((lo - x) / (0.5 * r)) - 1
        j1 = math.ceil((hi - x) / (0.5 * r)) + 1
        cuts = x + 0.5 * r * np.arange(j0, j1 + 1)
        edges = np.unique(np.clip(np.concatenate([[lo, hi], cuts]), lo, hi))
        acc = 0.0
        for e0, e1 in zip(edges[:-1], edges[1:]):
            y, w = _panel_nodes(e0, e1, 0.5 * sd)
            d = np.mod(y - x, r)
            d = np.minimum(d, r - d)
            acc += np.dot(w, gaussian_density(y - mean, sd * sd) * ndtr(-(h + d) / sd))
        total += wgt * acc
    return float(total)


def limit_conditional_cdf(case: int, x, t, h, r: float | None = None, **kw) -> float:
    """Limit of P(H~(x_i, t_i) >= h_i, i < m | H(0, 1) = ell) in each regime.

    Case 1: P(B2(t_i) - |B1(t_i) - x_i| >= h_i); the two bridge orthants
    for the rotated pair (B2 + B1, B2 - B1)/sqrt2 factorise.
    Case 2: ratio of the m-point circle integral to its 1-point value.
    Case 3: P(B(t_i) >= h_i) for a single bridge.
    Quadrature handles m <= 3; larger m must go through Monte Carlo.
    """
    x, t, h = _arr(x), _arr(t), _arr(h)
    if not (x.size == t.size == h.size):
        raise DomainError("x, t, h must have equal length")
    if t.size == 0:
        return 1.0
    if not (t[0] > 0 and t[-1] < 1 and np.all(np.diff(t) > 0)):
        raise DomainError("t must be strictly increasing in (0, 1)")
    m = t.size + 1
    if m > 3:
        raise DomainError("quadrature path supports m <= 3; use montecarlo.estimate_limit_probability")
    if case == 1:
        s = _SQRT2
        return _bridge_orthant(t, (h - x) / s) * _bridge_orthant(t, (h + x) / s)
    if case == 3:
        return _bridge_orthant(t, h)
    if case == 2:
        if r is None or not r > 0:
            raise DomainError("case 2 needs a positive period r")
        a = np.append(t, 1.0)
        num = critical_limit_integral(a, np.append(x, 0.0), np.append(h, 0.0), r, **kw)
        den = critical_limit_integral([1.0], [0.0], [0.0], r, **kw)
        return num / den
    raise DomainError("case must be 1, 2 or 3")


def circle_case_oracle(x: float, t: float, h: float, r: float) -> float:
    """Independent m = 2 value of the Case-2 law (winding mixture)."""
    return _circle_case_m2(float(t), float(x), float(h), float(r))
