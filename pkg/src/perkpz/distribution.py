"""Exact finite-period quantities by m-fold contour quadrature.

Every quantity here is an average of an integrand over a tensor grid of
equispaced nodes on circles |z_i| = r_i (the trapezoid rule, exponentially
accurate for analytic periodic integrands). Node sets are nested: the nodes
with even index form an equispaced grid of half the size, so the change
between the two grids is available for free as a quadrature error proxy.

* ``joint_cdf``: P(H_p(gamma_i, tau_i) <= beta_i for all i), radii decreasing
  in i.
* ``cdf_derivative``: d/d beta_m of P(H_i >= beta_i for i < m, H_m <= beta_m),
  radii increasing in i. At m = 1 it is the one-point density.
* ``conditional_probability``: ratio of two such derivatives for the
  pinched-up scaling, with the four numerator terms exposed.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, IllConditionedError, NumericalQualityError, RangeError
from .fredholm import (
    TruncationSpec,
    drop_weakest_roots,
    fredholm_det,
    fredholm_positive_orders,
    level_tables,
    order_prefactor,
    order_vectors,
    prefactor_C_grid,
    shell_grid,
    slice_tables,
)
from .specfun import A1, DEFAULT_TOL

DEFAULT_NODES = 64
_CHUNK_ELEMS = 1 << 21
# rounding floor of a grid average, relative to the mean |integrand|
_ROUND = 1e-15


# ---------------------------------------------------------------------------
# domain types

def _vec(x) -> tuple:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(x, float)))


@dataclass(frozen=True)
class EvaluationPoint:
    """Space-time points (gamma_i, tau_i), levels beta_i and period p."""

    gamma: tuple
    tau: tuple
    beta: tuple
    p: float = 1.0

    def __post_init__(self):
        for name in ("gamma", "tau", "beta"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        m = len(self.gamma)
        if m == 0 or len(self.tau) != m or len(self.beta) != m:
            raise DomainError("gamma, tau, beta must be nonempty and of equal length")
        vals = self.gamma + self.tau + self.beta + (float(self.p),)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("all parameters must be finite")
        if not self.p > 0:
            raise DomainError("period p must be positive")
        if self.tau[0] <= 0 or any(b <= a for a, b in zip(self.tau, self.tau[1:])):
            raise DomainError("need 0 < tau_1 < ... < tau_m")

    @property
    def m(self) -> int:
        return len(self.gamma)

    def scaled(self, p: float) -> "EvaluationPoint":
        """The point (p gamma, p^{3/2} tau, p^{1/2} beta) at period p."""
        return EvaluationPoint(
            tuple(p * g for g in self.gamma),
            tuple(p**1.5 * t for t in self.tau),
            tuple(math.sqrt(p) * b for b in self.beta),
            p,
        )


@dataclass(frozen=True)
class ContourSpec:
    """Circle radii and nodes per circle.

    Either ``radii`` (raw, strictly increasing in (0, 1)) or the exponent
    family ``|z| = exp(-ell p / 2 - rho * p * ell^{1/4})`` with strictly
    decreasing ``rho`` is given. ``radii`` is always the increasing list of
    moduli; each formula assigns them to the variables in its own order.
    """

    radii: tuple | None = None
    nodes_per_circle: int = DEFAULT_NODES
    ell: float | None = None
    p: float | None = None
    rho: tuple | None = None

    def __post_init__(self):
        if self.radii is None:
            if self.ell is None or self.p is None or self.rho is None:
                raise DomainError("give radii or (ell, p, rho)")
            rho = _vec(self.rho)
            if any(r <= 0 for r in rho) or any(b >= a for a, b in zip(rho, rho[1:])):
                raise DomainError("need rho_1 > ... > rho_m > 0")
            r = self.p * self.ell**0.25
            radii = tuple(math.exp(-self.ell * self.p / 2.0 - r * x) for x in rho)
            object.__setattr__(self, "rho", rho)
            object.__setattr__(self, "radii", radii)
        else:
            object.__setattr__(self, "radii", _vec(self.radii))
        rr = self.radii
        if any(not 0 < x < 1 for x in rr):
            raise DomainError("radii must lie in (0, 1)")
        if any(b <= a for a, b in zip(rr, rr[1:])):
            raise DomainError("radii must be strictly increasing")
        n = self.nodes_per_circle
        if n < 16 or n % 2:
            raise DomainError("nodes_per_circle must be even and >= 16")

    @property
    def m(self) -> int:
        return len(self.radii)

    @classmethod
    def geometric(cls, m: int, base: float = 0.05, ratio: float = 2.0, nodes: int = DEFAULT_NODES):
        """r_i = base * ratio^(i-1), capped below 0.9."""
        radii = [base * ratio**i for i in range(m)]
        if radii[-1] >= 0.9:
            radii = list(np.geomspace(base, 0.85, m)) if m > 1 else [min(base, 0.85)]
        return cls(radii=tuple(radii), nodes_per_circle=nodes)

    @classmethod
    def pinched(cls, m: int, ell: float, p: float, rho1: float = 1.0, delta: float = 0.25,
                nodes: int = DEFAULT_NODES):
        """rho_i = rho1 - (i-1) delta, shrinking delta when rho_m would be <= 0."""
        if m > 1 and rho1 - (m - 1) * delta <= 0:
            delta = rho1 / m
        return cls(ell=ell, p=p, rho=tuple(rho1 - i * delta for i in range(m)), nodes_per_circle=nodes)


@dataclass(frozen=True)
class ConditionalQuery:
    """Events {(H(x_i ell^{-1/4}, t_i) - t_i ell) / ell^{1/4} >= h_i}, i < m, given H_p(0, 1) = ell."""

    x: tuple
    t: tuple
    h: tuple
    ell: float
    p: float

    def __post_init__(self):
        for name in ("x", "t", "h"):
            object.__setattr__(self, name, _vec(getattr(self, name)) if len(np.atleast_1d(getattr(self, name))) else ())
        k = len(self.t)
        if len(self.x) != k or len(self.h) != k:
            raise DomainError("x, t, h must have equal length")
        if not (self.ell > 0 and self.p > 0):
            raise DomainError("ell and p must be positive")
        if any(not 0 < s < 1 for s in self.t) or any(b <= a for a, b in zip(self.t, self.t[1:])):
            raise DomainError("need 0 < t_1 < ... < t_{m-1} < 1")

    @property
    def m(self) -> int:
        return len(self.t) + 1

    def point(self) -> EvaluationPoint:
        q = self.ell**0.25
        t = self.t + (1.0,)
        x = self.x + (0.0,)
        h = self.h + (0.0,)
        return EvaluationPoint(
            tuple(v / q for v in x), t, tuple(ti * self.ell + hi * q for ti, hi in zip(t, h)), self.p
        )

    def denominator_point(self) -> EvaluationPoint:
        return EvaluationPoint((0.0,), (1.0,), (self.ell,), self.p)


# ---------------------------------------------------------------------------
# results

@dataclass
class QuadResult:
    """A quadrature value with its diagnostics."""

    value: float
    imag_residual: float
    quad_proxy: float
    trunc_proxy: float
    nodes: int
    terms: int
    complex_value: complex = 0j

    @property
    def error_proxy(self) -> float:
        return self.quad_proxy + self.trunc_proxy

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "imag_residual": self.imag_residual,
            "quad_proxy": self.quad_proxy,
            "trunc_proxy": self.trunc_proxy,
            "nodes": self.nodes,
            "terms": self.terms,
        }


@dataclass
class PTerms:
    """The four numerator terms of a conditional probability (complex)."""

    P1: QuadResult
    P2: QuadResult
    P1hat: QuadResult
    P2hat: QuadResult

    def total(self) -> QuadResult:
        parts = (self.P1, self.P2, self.P1hat, self.P2hat)
        return _combine(parts)

    def as_dict(self) -> dict:
        return {k: getattr(self, k).as_dict() for k in ("P1", "P2", "P1hat", "P2hat")}


@dataclass
class ConditionalResult:
    value: float
    numerator: PTerms | None
    denominator: PTerms
    error_proxy: float
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "error_proxy": self.error_proxy,
            "numerator": None if self.numerator is None else self.numerator.as_dict(),
            "denominator": self.denominator.as_dict(),
            **self.extra,
        }


def _combine(parts) -> QuadResult:
    cv = sum((r.complex_value for r in parts), 0j)
    return QuadResult(
        cv.real, abs(cv.imag),
        sum(r.quad_proxy for r in parts), sum(r.trunc_proxy for r in parts),
        parts[0].nodes, sum(r.terms for r in parts), cv,
    )


# ---------------------------------------------------------------------------
# quadrature machinery

def tree_sum(x) -> complex:
    """Pairwise sum in a fixed order, independent of chunking."""
    x = np.asarray(x, complex).ravel()
    if x.size == 0:
        return 0j
    while x.size > 1:
        if x.size % 2:
            x = np.concatenate([x, [0j]])
        x = x[0::2] + x[1::2]
    return complex(x[0])


def circle_grid(moduli, nodes: int):
    """Tensor grid z[g, i] = r_i exp(i theta) with theta_j = -pi + pi/N + 2 pi j/N.

    Returns (z, coarse) where ``coarse`` flags the rows whose node indices
    are all even (an equispaced grid with N/2 nodes per circle).
    """
    moduli = np.asarray(moduli, float)
    m = moduli.size
    j = np.arange(nodes)
    th = -math.pi + math.pi / nodes + 2.0 * math.pi * j / nodes
    idx = np.stack(np.meshgrid(*([j] * m), indexing="ij"), axis=-1).reshape(-1, m)
    z = moduli[None, :] * np.exp(1j * th[idx])
    coarse = np.all(idx % 2 == 0, axis=1)
    return z, coarse


class _Grid:
    """Grid plus nested-subgrid averaging."""

    def __init__(self, moduli, nodes):
        self.z, self.coarse = circle_grid(moduli, nodes)
        self.nodes = nodes
        self.G = self.z.shape[0]

    def average(self, f):
        """(fine average, |fine - coarse| + rounding floor)."""
        if not np.all(np.isfinite(f)):
            raise RangeError("integrand overflows on the contour (exponents too large for doubles)")
        fine = tree_sum(f) / self.G
        crs = tree_sum(f[self.coarse]) / int(self.coarse.sum())
        return fine, abs(fine - crs) + _ROUND * float(np.mean(np.abs(f)))


def _shells(tables, nvec, hat: bool):
    """shell_grid in chunks over grid rows (bounded memory)."""
    G = tables[0].u.shape[0]
    width = 1
    for t, n in zip(tables, nvec):
        width = max(width, math.comb(t.u.shape[1], n) if n <= t.u.shape[1] else 0)
    step = max(1, _CHUNK_ELEMS // max(1, width * width))
    D = np.empty(G, complex)
    Dh = np.empty(G, complex) if hat else None
    for s in range(0, G, step):
        sl = slice(s, min(G, s + step))
        sub = [type(t)(t.u[sl], t.wU[sl], t.wV[sl], t.k) for t in tables]
        d, dh = shell_grid(sub, nvec, hat=hat)
        D[sl] = d
        if hat:
            Dh[sl] = dh
    return D, Dh


def _moduli(contour: ContourSpec, m: int, reverse: bool):
    if contour.m != m:
        raise DomainError(f"contour has {contour.m} circles, point has {m}")
    r = np.asarray(contour.radii, float)
    return r[::-1] if reverse else r


def _check_real(res: QuadResult, what: str, slack: float = 0.0):
    if res.imag_residual > res.error_proxy + slack:
        raise NumericalQualityError(
            f"{what}: imaginary residual {res.imag_residual:.3g} exceeds error proxy {res.error_proxy:.3g}"
        )


def _check_trunc(res: QuadResult, max_trunc_proxy):
    if max_trunc_proxy is not None and res.trunc_proxy > max_trunc_proxy:
        raise ConvergenceError(
            f"truncation proxy {res.trunc_proxy:.3g} above threshold {max_trunc_proxy:.3g}"
        )


# ---------------------------------------------------------------------------
# joint CDF

# base radii tried in turn when joint_cdf picks its own circles; larger
# circles are needed when some beta_i is negative
CDF_BASES = (0.3, 0.6, 0.8)
_ACCEPT_PROXY = 1e-9


def joint_cdf(pt: EvaluationPoint, contour: ContourSpec | None = None,
              trunc: TruncationSpec | None = None, max_trunc_proxy: float | None = None,
              tol: float = DEFAULT_TOL, check: bool = True, method: str = "fredholm",
              nodes: int = DEFAULT_NODES, max_error: float = 1e-4) -> QuadResult:
    """P(H_p(gamma_i, tau_i) <= beta_i, i = 1..m).

    The circles are assigned so that |z_m| < ... < |z_1|: the largest radius
    of ``contour`` goes to z_1. With ``method="fredholm"`` the whole order
    series is one determinant per node and the truncation proxy is the
    change when the weakest root of every level is dropped (on the coarse
    nodes). With ``method="series"`` the orders {0..N}^m are summed shell by
    shell and the last shell is the proxy.

    Without ``contour``, geometric circles with base radius 0.3, 0.6, 0.8
    are tried in that order, stopping once the error proxy is below 1e-9;
    the result with the smallest proxy is kept. With ``check`` a value
    outside [-proxy, 1 + proxy], an imaginary part above the proxy or a
    proxy above ``max_error`` raises NumericalQualityError.
    """
    trunc = trunc or TruncationSpec()
    if contour is not None:
        res = _joint_cdf_on(pt, contour, trunc, tol, method)
    else:
        res, errors = None, []
        for base in CDF_BASES:
            try:
                r = _joint_cdf_on(pt, ContourSpec.geometric(pt.m, base=base, nodes=nodes), trunc, tol, method)
            except (RangeError, np.linalg.LinAlgError) as e:
                errors.append(str(e))
                continue
            if res is None or not r.error_proxy >= res.error_proxy:
                res = r
            if res.error_proxy <= _ACCEPT_PROXY:
                break
        if res is None:
            raise RangeError("joint_cdf failed on every contour: " + "; ".join(errors))
    _check_trunc(res, max_trunc_proxy)
    if check:
        _check_real(res, "joint_cdf")
        if not res.error_proxy <= max_error:
            raise NumericalQualityError(f"joint_cdf error proxy {res.error_proxy:.3g} above {max_error:.3g}")
        if not -res.error_proxy <= res.value <= 1.0 + res.error_proxy:
            raise NumericalQualityError(
                f"joint_cdf value {res.value:.6g} outside [0, 1] beyond proxy {res.error_proxy:.3g}"
            )
    return res


def _joint_cdf_on(pt: EvaluationPoint, contour: ContourSpec, trunc: TruncationSpec,
                  tol: float, method: str) -> QuadResult:
    grid = _Grid(_moduli(contour, pt.m, reverse=True), contour.nodes_per_circle)
    z = grid.z
    tables = level_tables(z, pt.gamma, pt.tau, pt.beta, pt.p, trunc, tol)
    C = prefactor_C_grid(z, pt.tau, pt.beta, pt.p, "C", tol)

    if method == "fredholm":
        D, _ = _chunked(fredholm_det, tables, z)
        total, qproxy = grid.average(C * D)
        cz = z[grid.coarse]
        Dd, _ = _chunked(fredholm_det, drop_weakest_roots(slice_tables(tables, grid.coarse)), cz)
        last = abs(tree_sum(C[grid.coarse] * (D[grid.coarse] - Dd))) / int(grid.coarse.sum())
        terms = 2 * sum(t.u.shape[1] for t in tables)
    elif method == "series":
        total, qproxy, last, terms = 0j, 0.0, 0.0, 0
        for layer in order_vectors(pt.m, trunc.N, include_zero_orders=True):
            f = np.zeros(grid.G, complex)
            for n in layer:
                if sum(n) == 0:
                    f += 1.0
                else:
                    D, _ = _shells(tables, n, hat=False)
                    f += D * order_prefactor(z, n)
                terms += 1
            val, qp = grid.average(C * f)
            total += val
            qproxy += qp
            last = abs(val)
            if trunc.adaptive and sum(layer[0]) >= 1 and last < trunc.tol:
                break
    else:
        raise ValueError(f"unknown method {method!r}")
    return QuadResult(total.real, abs(total.imag), qproxy, last, grid.G, terms, total)


# ---------------------------------------------------------------------------
# beta_m-derivative of the mixed-sign probability

def _chunked(fn, tables, z, **kw):
    """Apply a determinant routine over row chunks of the grid."""
    G = z.shape[0]
    P = 2 * sum(t.u.shape[1] for t in tables)
    step = max(1, _CHUNK_ELEMS // max(1, 4 * P * P))
    with np.errstate(over="ignore", invalid="ignore"):
        outs = [fn(slice_tables(tables, slice(s, s + step)), z[s:s + step], **kw) for s in range(0, G, step)]
    a = np.concatenate([o[0] for o in outs])
    b = None if outs[0][1] is None else np.concatenate([o[1] for o in outs])
    return a, b


def _p_integrands(tables, z, C, a1, sgn, n1, full: bool):
    """Integrands of P1, P2, P1hat, P2hat (P2 parts only when ``full``)."""
    D1, Dh1 = _shells(tables, n1, hat=True)
    pre = sgn * order_prefactor(z, n1) * C
    f = {"P1": a1 * pre * D1, "P1hat": pre * Dh1}
    if full:
        Dp, Dhp = _chunked(fredholm_positive_orders, tables, z, hat=True)
        f["P2"] = sgn * a1 * C * Dp - f["P1"]
        f["P2hat"] = sgn * C * Dhp - f["P1hat"]
    return f


def p_terms(pt: EvaluationPoint, contour: ContourSpec | None = None,
            trunc: TruncationSpec | None = None, tol: float = DEFAULT_TOL,
            method: str = "fredholm", nodes: int = DEFAULT_NODES) -> PTerms:
    """The four P-terms; see ``_p_terms_on``.

    Without ``contour``, geometric circles with base radius 0.3, 0.6, 0.8
    are tried until the error proxy of the total falls below 1e-8 of its
    magnitude; the evaluation with the smallest relative proxy is kept.
    """
    if contour is not None:
        return _p_terms_on(pt, contour, trunc, tol, method)
    best, errors = None, []
    for base in CDF_BASES:
        try:
            r = _p_terms_on(pt, ContourSpec.geometric(pt.m, base=base, nodes=nodes), trunc, tol, method)
        except (RangeError, np.linalg.LinAlgError) as e:
            errors.append(str(e))
            continue
        t = r.total()
        rel = t.error_proxy / max(abs(t.value), 1e-300)
        if best is None or rel < best[0]:
            best = (rel, r)
        if rel <= 1e-8:
            break
    if best is None:
        raise RangeError("P-terms failed on every contour: " + "; ".join(errors))
    return best[1]


def _p_terms_on(pt: EvaluationPoint, contour: ContourSpec, trunc: TruncationSpec | None,
                tol: float, method: str) -> PTerms:
    """The four contour integrals P_{m,1}, P_{m,2}, Phat_{m,1}, Phat_{m,2}.

    Radii increase with i. The ``1`` terms use n = (1, ..., 1); the ``2``
    terms all other n in {1, 2, ...}^m. With ``method="fredholm"`` the sum
    over all positive orders is a signed sum of 2^m determinants; with
    ``method="series"`` orders up to ``trunc.N`` are summed shell by shell.
    The results carry the sign (-1)^{m-1} but not the factor p^{-1/2}.
    """
    contour = contour or ContourSpec.geometric(pt.m)
    trunc = trunc or TruncationSpec()
    grid = _Grid(_moduli(contour, pt.m, reverse=False), contour.nodes_per_circle)
    z = grid.z
    m = pt.m
    tables = level_tables(z, pt.gamma, pt.tau, pt.beta, pt.p, trunc, tol)
    C = prefactor_C_grid(z, pt.tau, pt.beta, pt.p, "C", tol)
    a1 = A1(z[:, -1], tol)
    sgn = -1.0 if (m - 1) % 2 else 1.0
    ones = (1,) * m
    names = ("P1", "P2", "P1hat", "P2hat")
    out = {}

    if method == "fredholm":
        f = _p_integrands(tables, z, C, a1, sgn, ones, True)
        cr = grid.coarse
        fd = _p_integrands(drop_weakest_roots(slice_tables(tables, cr)), z[cr], C[cr], a1[cr], sgn, ones, True)
        nc = int(cr.sum())
        for name in names:
            v, qp = grid.average(f[name])
            tp = abs(tree_sum(f[name][cr] - fd[name])) / nc
            out[name] = QuadResult(v.real, abs(v.imag), qp, tp, grid.G, 2 * sum(t.u.shape[1] for t in tables), v)
        return PTerms(*(out[k] for k in names))
    if method != "series":
        raise ValueError(f"unknown method {method!r}")

    acc = {k: [0j, 0.0, 0] for k in names}
    lastD = lastH = 0.0
    for li, layer in enumerate(order_vectors(m, trunc.N, include_zero_orders=False)):
        key = "1" if li == 0 else "2"
        lastD = lastH = 0.0
        for n in layer:
            D, Dh = _shells(tables, n, hat=True)
            pre = sgn * order_prefactor(z, n) * C
            vD, qD = grid.average(a1 * pre * D)
            vH, qH = grid.average(pre * Dh)
            for name, v, qp in ((f"P{key}", vD, qD), (f"P{key}hat", vH, qH)):
                acc[name][0] += v
                acc[name][1] += qp
                acc[name][2] += 1
            lastD += abs(vD)
            lastH += abs(vH)
        scale = abs(acc["P1"][0]) + abs(acc["P1hat"][0])
        if li >= 1 and trunc.adaptive and lastD + lastH < trunc.tol * scale:
            break
    # the last summed layer stands in for the neglected tail; with N = 1
    # that layer is n = (1, ..., 1) itself
    for name, (v, qp, nterm) in acc.items():
        tp = lastH if name.endswith("hat") else lastD
        out[name] = QuadResult(v.real, abs(v.imag), qp, 0.0 if name.startswith("P1") else tp,
                               grid.G, nterm, v)
    return PTerms(*(out[k] for k in names))


def cdf_derivative(pt: EvaluationPoint, contour: ContourSpec | None = None,
                   trunc: TruncationSpec | None = None, max_trunc_proxy: float | None = None,
                   tol: float = DEFAULT_TOL, check: bool = True, method: str = "fredholm",
                   nodes: int = DEFAULT_NODES, max_rel_error: float = 1e-3,
                   max_abs_error: float = 1e-10) -> QuadResult:
    """d/d beta_m P(H_p(gamma_i, tau_i) >= beta_i for i < m, H_p(gamma_m, tau_m) <= beta_m).

    For m = 1 this is the one-point density of H_p(gamma, tau) at beta.
    With ``check``, an error proxy above max_rel_error |value| + max_abs_error
    raises NumericalQualityError.
    """
    terms = p_terms(pt, contour, trunc, tol, method, nodes)
    tot = terms.total()
    s = 1.0 / math.sqrt(pt.p)
    res = QuadResult(tot.value * s, tot.imag_residual * s, tot.quad_proxy * s, tot.trunc_proxy * s,
                     tot.nodes, tot.terms, tot.complex_value * s)
    _check_trunc(res, max_trunc_proxy)
    if check:
        _check_real(res, "cdf_derivative")
        bound = max_rel_error * abs(res.value) + max_abs_error
        if not res.error_proxy <= bound:
            raise NumericalQualityError(f"cdf_derivative error proxy {res.error_proxy:.3g} above {bound:.3g}")
    return res


def density(beta: float, gamma: float = 0.0, tau: float = 1.0, p: float = 1.0, **kw) -> QuadResult:
    """One-point density f_p(beta; gamma, tau)."""
    return cdf_derivative(EvaluationPoint((gamma,), (tau,), (beta,), p), **kw)


# ---------------------------------------------------------------------------
# zero-order integrals

def vanishing_check(pt: EvaluationPoint, nvec, contour: ContourSpec | None = None,
                    trunc: TruncationSpec | None = None, tol: float = DEFAULT_TOL) -> float:
    """max(|int A_1(z_m) C D_n|, |int C Dhat_n|) for an order vector with a zero entry.

    Both integrals vanish exactly on the circles |z_1| < ... < |z_m|; the
    returned residual is the quadrature error.
    """
    nvec = tuple(int(k) for k in nvec)
    if len(nvec) != pt.m or min(nvec) < 0:
        raise DomainError("order vector must have m nonnegative entries")
    if 0 not in nvec:
        raise DomainError("order vector must contain a zero")
    contour = contour or ContourSpec.geometric(pt.m)
    trunc = trunc or TruncationSpec()
    grid = _Grid(_moduli(contour, pt.m, reverse=False), contour.nodes_per_circle)
    z = grid.z
    C = prefactor_C_grid(z, pt.tau, pt.beta, pt.p, "C", tol)
    if sum(nvec) == 0:
        D = np.ones(grid.G, complex)
        Dh = np.zeros(grid.G, complex)
    else:
        tables = level_tables(z, pt.gamma, pt.tau, pt.beta, pt.p, trunc, tol)
        D, Dh = _shells(tables, nvec, hat=True)
        pre = order_prefactor(z, nvec)
        D, Dh = D * pre, Dh * pre
    v1, _ = grid.average(A1(z[:, -1], tol) * C * D)
    v2, _ = grid.average(C * Dh)
    return max(abs(v1), abs(v2))


# ---------------------------------------------------------------------------
# conditional probability of the pinched-up field

def pure_cdf_derivative(pt: EvaluationPoint, contour: ContourSpec | None = None,
                        trunc: TruncationSpec | None = None, tol: float = DEFAULT_TOL) -> QuadResult:
    """d/d beta_m P(H_p(gamma_i, tau_i) <= beta_i, i = 1..m).

    Same circles as ``joint_cdf`` (|z_m| < ... < |z_1|); the derivative adds
    A_1(z_m) C D + C Dhat over all orders, divided by p^{1/2}.
    """
    contour = contour or ContourSpec.geometric(pt.m, base=0.2)
    trunc = trunc or TruncationSpec()
    grid = _Grid(_moduli(contour, pt.m, reverse=True), contour.nodes_per_circle)
    z = grid.z
    tables = level_tables(z, pt.gamma, pt.tau, pt.beta, pt.p, trunc, tol)
    C = prefactor_C_grid(z, pt.tau, pt.beta, pt.p, "C", tol)
    a1 = A1(z[:, -1], tol)
    s = 1.0 / math.sqrt(pt.p)

    def integrand(tb, zz, CC, aa):
        D, Dh = _chunked(fredholm_det, tb, zz, hat=True)
        with np.errstate(over="ignore", invalid="ignore"):
            return s * CC * (aa * D + Dh)

    f = integrand(tables, z, C, a1)
    v, qp = grid.average(f)
    cr = grid.coarse
    fd = integrand(drop_weakest_roots(slice_tables(tables, cr)), z[cr], C[cr], a1[cr])
    tp = abs(tree_sum(f[cr] - fd)) / int(cr.sum())
    return QuadResult(v.real, abs(v.imag), qp, tp, grid.G, 2 * sum(t.u.shape[1] for t in tables), v)


def _complement_numerator(pt: EvaluationPoint, nodes: int, trunc, tol) -> QuadResult:
    """d/d beta_m P(H_i >= beta_i, i < m; H_m <= beta_m) by inclusion-exclusion.

    The event {H_i >= beta_i} is 1 - {H_i < beta_i}; every resulting term is
    the beta_m-derivative of a joint CDF of a sub-collection containing m.
    These use circles ordered the other way, which is the stable choice when
    the earlier levels beta_i are low.
    """
    m = pt.m
    parts = []
    for S in itertools.product((0, 1), repeat=m - 1):
        idx = [i for i in range(m - 1) if S[i]] + [m - 1]
        sub = EvaluationPoint(
            tuple(pt.gamma[i] for i in idx), tuple(pt.tau[i] for i in idx),
            tuple(pt.beta[i] for i in idx), pt.p,
        )
        r = pure_cdf_derivative(sub, ContourSpec.geometric(len(idx), base=0.2, nodes=nodes), trunc, tol)
        sg = -1.0 if sum(S) % 2 else 1.0
        parts.append(QuadResult(sg * r.value, r.imag_residual, r.quad_proxy, r.trunc_proxy,
                                r.nodes, r.terms, sg * r.complex_value))
    return _combine(parts)


def conditional_probability(q: ConditionalQuery, contour: ContourSpec | None = None,
                            trunc: TruncationSpec | None = None, tol: float = DEFAULT_TOL,
                            nodes: int = DEFAULT_NODES, denominator_contour: ContourSpec | None = None,
                            check: bool = True, method: str = "fredholm",
                            formula: str = "auto", max_error: float = 1e-3) -> ConditionalResult:
    """P(events | H_p(0, 1) = ell) as a ratio of beta_m-derivatives.

    ``formula="mixed"`` uses the four P-terms on the circles
    rho_i = 1 - (i-1)/4 at the query's (ell, p), with the single circle
    rho = 1 for the denominator. ``formula="complement"`` expands each event
    {H >= beta} as 1 - {H < beta} and uses joint-CDF derivatives instead.
    ``"auto"`` evaluates the mixed form and, when some h_i < 0 (where the
    mixed integrand grows large and cancels), also the complement form,
    keeping whichever has the smaller error proxy. The P-terms are always
    reported when the mixed form could be evaluated. With ``check`` an error
    proxy above ``max_error`` raises.
    """
    if formula not in ("auto", "mixed", "complement"):
        raise ValueError(f"unknown formula {formula!r}")
    trunc = trunc or TruncationSpec()
    den_c = denominator_contour or ContourSpec.pinched(1, q.ell, q.p, nodes=nodes)
    den = p_terms(q.denominator_point(), den_c, trunc, tol, method)
    dt = den.total()
    if abs(dt.value) < 1e2 * dt.error_proxy:
        raise IllConditionedError(
            f"denominator {dt.value:.3g} not resolved above its proxy {dt.error_proxy:.3g}"
        )
    sq = 1.0 / math.sqrt(q.p)
    num = None
    candidates = []
    failures = []
    if q.m == 1:
        num = den
        candidates.append(("mixed", dt))
    else:
        if formula in ("auto", "mixed"):
            try:
                num_c = contour or ContourSpec.pinched(q.m, q.ell, q.p, nodes=nodes)
                num = p_terms(q.point(), num_c, trunc, tol, method)
                candidates.append(("mixed", num.total()))
            except (RangeError, np.linalg.LinAlgError) as e:
                failures.append(f"mixed: {e}")
        if formula == "complement" or (formula == "auto" and min(q.h) < 0):
            try:
                c = _complement_numerator(q.point(), nodes, trunc, tol)
                # p_terms omit the factor p^{-1/2}; put both on that footing
                candidates.append(("complement", QuadResult(
                    c.value / sq, c.imag_residual / sq, c.quad_proxy / sq, c.trunc_proxy / sq,
                    c.nodes, c.terms, c.complex_value / sq)))
            except (RangeError, np.linalg.LinAlgError) as e:
                failures.append(f"complement: {e}")
    if not candidates:
        raise RangeError("no formula could be evaluated: " + "; ".join(failures))
    used, nt = min(candidates, key=lambda c: c[1].error_proxy)
    value = nt.value / dt.value
    err = nt.error_proxy / abs(dt.value) + abs(value) * dt.error_proxy / abs(dt.value)
    if check:
        if nt.imag_residual > nt.error_proxy or dt.imag_residual > dt.error_proxy:
            raise NumericalQualityError("imaginary residual above error proxy")
        if not err <= max_error:
            raise NumericalQualityError(f"conditional probability error proxy {err:.3g} above {max_error:.3g}")
        if not -err <= value <= 1.0 + err:
            raise NumericalQualityError(f"conditional probability {value:.6g} outside [0, 1] beyond {err:.3g}")
    extra = {"formula": used, "candidates": {k: v.value / dt.value for k, v in candidates}}
    return ConditionalResult(value, num, den, err, extra)


def scaled_P_hat_m1(q: ConditionalQuery, case: int, contour: ContourSpec | None = None,
                    trunc: TruncationSpec | None = None, tol: float = DEFAULT_TOL,
                    nodes: int = DEFAULT_NODES, method: str = "fredholm") -> complex:
    """Phat_{m,1} multiplied by its leading-order normalisation.

    Cases 1 and 2: (4 ell / p^{1/2}) e^{(4/3) ell^{3/2}} Phat_{m,1}.
    Case 3: 2^{3/2} ell^{5/4} p^{1/2} e^{(4/3) ell^{3/2}} Phat_{m,1}.
    """
    if case not in (1, 2, 3):
        raise DomainError("case must be 1, 2 or 3")
    trunc = trunc or TruncationSpec()
    contour = contour or ContourSpec.pinched(q.m, q.ell, q.p, nodes=nodes)
    pt = q.point() if q.m > 1 else q.denominator_point()
    ph = p_terms(pt, contour, trunc, tol, method).P1hat.complex_value
    ell, p = q.ell, q.p
    e = math.exp(4.0 / 3.0 * ell**1.5)
    if case == 3:
        return 2.0**1.5 * ell**1.25 * math.sqrt(p) * e * ph
    return 4.0 * ell / math.sqrt(p) * e * ph
