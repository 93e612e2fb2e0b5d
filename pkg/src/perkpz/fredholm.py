"""Ingredients of the Fredholm determinant series D(z).

The series runs over order vectors n = (n_1, ..., n_m). For each n the
summand is a double sum over root selections U, Uh with U^(i), Uh^(i) drawn
from the discrete set L_{z_i} = {w : exp(-w^2/2) = z_i, Re w < 0}. The summand
factors into per-root weights (E and H factors, 1/u) and a chain of Cauchy
determinants linking neighbouring levels.

Two facts keep the evaluation cheap:

* The summand is symmetric under permutations inside each U^(i) and inside
  each Uh^(i), so the ordered sum divided by (n!)^2 equals a sum over
  increasing index tuples.
* The Cauchy chain splits into a factor depending on level i alone and a
  factor coupling levels i and i+1, so the sum is a transfer-matrix
  contraction over per-level states (I, J) of index tuples.

``series_D_shell_form`` is an independent brute-force implementation of the
original right/left root form, kept as an oracle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DomainError, RangeError, SingularityError
from .specfun import A1, A2, DEFAULT_TOL, Bfun, h_left, h_right

_LOG_MAX = 700.0


@dataclass(frozen=True)
class TruncationSpec:
    """Root cutoff K (|k| <= K), order cutoff N (max n_i) and pruning.

    ``prune`` drops roots whose weight, maximised over the grid, is below
    ``prune`` times the largest weight on that level. ``tol`` is the layer
    magnitude below which the series over |n| stops early.
    """

    K: int = 12
    N: int = 3
    prune: float = 1e-18
    tol: float = DEFAULT_TOL
    adaptive: bool = True

    def __post_init__(self):
        if self.K < 0 or self.N < 0:
            raise DomainError("K and N must be nonnegative")


@dataclass
class KernelParams:
    """Parameters (gamma_i, tau_i, beta_i), period p and the point z.

    ``ordering`` is "increasing" (|z_1| < ... < |z_m|), "decreasing", or None
    to skip the modulus check.
    """

    gamma: np.ndarray
    tau: np.ndarray
    beta: np.ndarray
    p: float
    z: np.ndarray
    ordering: str | None = "increasing"

    def __post_init__(self):
        self.gamma = np.atleast_1d(np.asarray(self.gamma, float))
        self.tau = np.atleast_1d(np.asarray(self.tau, float))
        self.beta = np.atleast_1d(np.asarray(self.beta, float))
        self.z = np.atleast_1d(np.asarray(self.z, complex))
        m = self.gamma.size
        if not (self.tau.size == self.beta.size == self.z.size == m):
            raise DomainError("gamma, tau, beta, z must have equal length")
        if not self.p > 0:
            raise DomainError("period p must be positive")
        r = np.abs(self.z)
        if np.any(r == 0) or np.any(r >= 1):
            raise DomainError("need 0 < |z_i| < 1")
        if self.ordering == "increasing" and np.any(np.diff(r) <= 0):
            raise DomainError("need |z_1| < ... < |z_m|")
        if self.ordering == "decreasing" and np.any(np.diff(r) >= 0):
            raise DomainError("need |z_1| > ... > |z_m|")

    @property
    def m(self) -> int:
        return self.gamma.size

    def increments(self):
        """Scaled increments (dtau/p^{3/2}, dgamma/p, dbeta/p^{1/2}) per level."""
        return level_increments(self.gamma, self.tau, self.beta, self.p)


def level_increments(gamma, tau, beta, p):
    d = lambda x: np.diff(np.concatenate([[0.0], np.asarray(x, float)]))
    return d(tau) / p**1.5, d(gamma) / p, d(beta) / math.sqrt(p)


# ---------------------------------------------------------------------------
# roots

@dataclass(frozen=True)
class RootVector:
    """Roots u(k), |k| <= K, of exp(-u^2/2) = z with Re u < 0."""

    base: complex
    K: int
    roots: np.ndarray = field(repr=False)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)


def root_array(z, K: int) -> np.ndarray:
    """u(k) = -sqrt(-2 Log z + 4 pi i k) for k = -K..K, stacked on a last axis."""
    z = np.asarray(z, complex)
    k = np.arange(-K, K + 1)
    u = -np.sqrt(-2.0 * np.log(z)[..., None] + 4j * math.pi * k)
    # principal sqrt has Re >= 0 here; flip any stray sign
    return np.where(u.real > 0, -u, u)


def enumerate_roots(z: complex, K: int) -> RootVector:
    """Slice k = -K..K of the left root set L_z, with residual checks."""
    z = complex(z)
    if z == 0 or abs(z) >= 1:
        raise DomainError("enumerate_roots needs 0 < |z| < 1")
    if K < 0:
        raise DomainError("K must be nonnegative")
    u = root_array(z, K)
    resid = np.abs(np.exp(-u * u / 2.0) - z)
    if np.any(resid > 1e-12 * abs(z)) or np.any(u.real >= 0):
        raise ArithmeticError("root residual check failed")
    return RootVector(z, K, u)


# ---------------------------------------------------------------------------
# Cauchy determinant and per-selection factors

def cauchy_det(X, Y) -> complex:
    """det(1/(x_i + y_j)) by the product formula.

    Raises SingularityError when some x_i + y_j is numerically zero.
    """
    X = np.atleast_1d(np.asarray(X, complex))
    Y = np.atleast_1d(np.asarray(Y, complex))
    if X.shape != Y.shape or X.ndim != 1:
        raise DomainError("cauchy_det needs two vectors of equal length")
    n = X.size
    if n == 0:
        return 1.0 + 0j
    s = X[:, None] + Y[None, :]
    scale = max(1.0, float(np.max(np.abs(X))), float(np.max(np.abs(Y))))
    bad = np.argwhere(np.abs(s) < 1e-13 * scale)
    if bad.size:
        i, j = bad[0]
        raise SingularityError(f"x[{i}] + y[{j}] vanishes in Cauchy determinant")
    num = 1.0 + 0j
    for i in range(n):
        for j in range(i + 1, n):
            num *= (X[j] - X[i]) * (Y[j] - Y[i])
    return complex(num / np.prod(s))


def _levels(sel, m):
    sel = [np.atleast_1d(np.asarray(s, complex)) for s in sel]
    if len(sel) != m:
        raise DomainError("need one root selection per level")
    return sel


def factor_E(params: KernelParams, U, Uh) -> complex:
    """prod_i prod_j E^{i,+}(u_j^(i)) E^{i,-}(uh_j^(i)), summed in log space."""
    m = params.m
    U, Uh = _levels(U, m), _levels(Uh, m)
    dt, dg, db = params.increments()
    logsum = 0j
    for i in range(m):
        for s, sg in ((U[i], 1.0), (Uh[i], -1.0)):
            logsum += np.sum(-dt[i] * s**3 / 3.0 + sg * dg[i] * s**2 / 2.0 + db[i] * s)
    if logsum.real > _LOG_MAX:
        raise RangeError(f"E exponent {logsum.real:.4g} overflows")
    return complex(np.exp(logsum))


def _h_level_log(w, i, z, tol):
    # 2 h_i(w) - h_{i+1}(w) - h_{i-1}(w) with h_0 = h_{m+1} = 0
    m = len(z)
    out = 2.0 * h_left(w, z[i], tol)
    if i + 1 < m:
        out = out - h_left(w, z[i + 1], tol)
    if i >= 1:
        out = out - h_left(w, z[i - 1], tol)
    return out


def factor_H(params: KernelParams, U, Uh, tol: float = DEFAULT_TOL) -> complex:
    """prod over selected roots of exp(2 h_i - h_{i+1} - h_{i-1})."""
    m = params.m
    U, Uh = _levels(U, m), _levels(Uh, m)
    s = 0j
    for i in range(m):
        for w in (U[i], Uh[i]):
            if w.size:
                s += np.sum(_h_level_log(w, i, params.z, tol))
    return complex(np.exp(s))


def factor_R(params: KernelParams, U, Uh) -> complex:
    """prod 1/(u uh) times the chain of Cauchy determinants over i = 0..m."""
    m = params.m
    U, Uh = _levels(U, m), _levels(Uh, m)
    for i in range(m):
        if U[i].size != Uh[i].size:
            raise DomainError("U^(i) and Uh^(i) need equal sizes")
    empty = np.zeros(0, complex)
    Ue = [empty] + U + [empty]
    He = [empty] + Uh + [empty]
    val = 1.0 + 0j
    for i in range(m):
        if U[i].size:
            val /= np.prod(U[i] * Uh[i])
    for i in range(m + 1):
        X = np.concatenate([Ue[i], -He[i + 1]])
        Y = np.concatenate([He[i], -Ue[i + 1]])
        if _has_repeat(Ue[i]) or _has_repeat(He[i]):
            return 0j
        val *= cauchy_det(X, Y)
    return complex(val)


def _has_repeat(x) -> bool:
    x = np.asarray(x)
    return x.size > 1 and np.unique(x).size < x.size


def factor_Rhat(params: KernelParams, U, Uh) -> complex:
    """R times sum_j (u_j^(m) + uh_j^(m))."""
    U, Uh = _levels(U, params.m), _levels(Uh, params.m)
    return factor_R(params, U, Uh) * complex(np.sum(U[-1]) + np.sum(Uh[-1]))


def prefactor_C(params: KernelParams, variant: str = "C", tol: float = DEFAULT_TOL) -> complex:
    """C(z) or C-bullet(z) = C(z) prod_{i<m} (z_i - z_{i+1}) / z_i."""
    return complex(prefactor_C_grid(params.z[None, :], params.tau, params.beta, params.p, variant, tol)[0])


def prefactor_C_grid(z, tau, beta, p, variant="C", tol=DEFAULT_TOL):
    """Vectorised C / C-bullet over rows of ``z`` (shape (G, m))."""
    z = np.asarray(z, complex)
    G, m = z.shape
    zz = np.concatenate([z, np.zeros((G, 1), complex)], axis=1)
    a1 = A1(zz, tol)
    a2 = A2(zz, tol)
    expo = np.zeros(G, complex)
    sp = math.sqrt(p)
    for i in range(m):
        expo += beta[i] / sp * (a1[:, i] - a1[:, i + 1]) + tau[i] / p**1.5 * (a2[:, i] - a2[:, i + 1])
        expo += 2.0 * Bfun(zz[:, i], zz[:, i], tol) - 2.0 * Bfun(zz[:, i + 1], zz[:, i], tol)
    out = np.exp(expo)
    if variant == "C":
        for i in range(m - 1):
            d = z[:, i] - z[:, i + 1]
            if np.any(d == 0):
                raise SingularityError("z_i = z_{i+1} in C(z)")
            out = out * z[:, i] / d
    elif variant not in ("Cbullet", "C*", "bullet"):
        raise ValueError(f"unknown variant {variant!r}")
    return out


def order_prefactor(z, nvec, shift: int = 0):
    """prod_{i>=2} (1 - z_{i-1}/z_i)^{n_i} (1 - z_i/z_{i-1})^{n_{i-1} - shift}.

    ``shift=0`` gives the prefactor of D_n, ``shift=1`` gives T_n.
    """
    z = np.asarray(z, complex)
    if z.ndim == 1:
        z = z[None, :]
    out = np.ones(z.shape[0], complex)
    for i in range(1, z.shape[1]):
        out *= (1.0 - z[:, i - 1] / z[:, i]) ** nvec[i]
        out *= (1.0 - z[:, i] / z[:, i - 1]) ** (nvec[i - 1] - shift)
    return out


# ---------------------------------------------------------------------------
# grid evaluation of shells

@dataclass
class LevelTable:
    """Roots and per-root weights of one level over a grid of z-points."""

    u: np.ndarray       # (G, R)
    wU: np.ndarray      # (G, R) weight of a root used in U
    wV: np.ndarray      # (G, R) weight of a root used in Uh
    k: np.ndarray       # retained root indices


def level_tables(z, gamma, tau, beta, p, trunc: TruncationSpec, tol=DEFAULT_TOL):
    """Roots and weights E^{i,+/-}(u) e^{2h_i - h_{i+1} - h_{i-1}}(u) / u per level.

    ``z`` has shape (G, m). Roots whose weight is negligible on the whole
    grid are pruned.
    """
    z = np.asarray(z, complex)
    G, m = z.shape
    dt, dg, db = level_increments(gamma, tau, beta, p)
    kall = np.arange(-trunc.K, trunc.K + 1)
    tables = []
    for i in range(m):
        u = root_array(z[:, i], trunc.K)
        base = -dt[i] * u**3 / 3.0 + db[i] * u
        hl = 2.0 * h_left(u, z[:, i, None], tol)
        if i + 1 < m:
            hl = hl - h_left(u, z[:, i + 1, None], tol)
        if i >= 1:
            hl = hl - h_left(u, z[:, i - 1, None], tol)
        logU = base + dg[i] * u**2 / 2.0 + hl - np.log(u)
        logV = base - dg[i] * u**2 / 2.0 + hl - np.log(u)
        top = max(float(np.max(logU.real)), float(np.max(logV.real)))
        if top > _LOG_MAX:
            raise RangeError(f"E exponent {top:.4g} overflows on level {i + 1}")
        mag = np.maximum(np.max(logU.real, axis=0), np.max(logV.real, axis=0))
        keep = mag >= top + math.log(trunc.prune) if trunc.prune > 0 else np.ones(mag.shape, bool)
        tables.append(LevelTable(u[:, keep], np.exp(logU[:, keep]), np.exp(logV[:, keep]), kall[keep]))
    return tables


def slice_tables(tables, rows):
    """The same level tables restricted to some grid rows."""
    return [LevelTable(t.u[rows], t.wU[rows], t.wV[rows], t.k) for t in tables]


def drop_weakest_roots(tables):
    """Remove, on every level, the root with the smallest weight over the grid.

    Comparing a result with and without these roots estimates the effect of
    the root cutoff.
    """
    out = []
    for t in tables:
        if t.u.shape[1] <= 1:
            out.append(t)
            continue
        mag = np.max(np.maximum(np.abs(t.wU), np.abs(t.wV)), axis=0)
        keep = np.ones(t.u.shape[1], bool)
        keep[int(np.argmin(mag))] = False
        out.append(LevelTable(t.u[:, keep], t.wU[:, keep], t.wV[:, keep], t.k[keep]))
    return out


def _combos(R: int, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((1, 0), dtype=np.intp)
    c = np.array(list(itertools.combinations(range(R), n)), dtype=np.intp)
    return c.reshape(-1, n)


def shell_grid(tables, nvec, hat: bool = True):
    """Bullet sums D-bullet_n and Dhat-bullet_n at every grid point.

    Returns (D, Dhat) arrays of shape (G,), already divided by (n!)^2. The
    order prefactor is not included.
    """
    m = len(tables)
    tables = [LevelTable(*(np.ascontiguousarray(a) for a in (t.u, t.wU, t.wV)), t.k) for t in tables]
    combos = [_combos(t.u.shape[1], n) for t, n in zip(tables, nvec)]
    if any(c.shape[0] == 0 for c in combos):
        G = tables[0].u.shape[0]
        return np.zeros(G, complex), np.zeros(G, complex)
    v = _backend.level_factor(tables[0].u, tables[0].wU, tables[0].wV, combos[0])
    for i in range(1, m):
        v = _backend.cross_contract(v, tables[i - 1].u, combos[i - 1], tables[i].u, combos[i])
        v = v * _backend.level_factor(tables[i].u, tables[i].wU, tables[i].wV, combos[i])
    if not np.all(np.isfinite(v)):
        raise SingularityError("non-finite Cauchy chain (coincident roots across levels?)")
    D = v.sum(axis=(1, 2))
    if not hat:
        return D, None
    cm = combos[-1]
    if cm.shape[1] == 0:
        return D, np.zeros_like(D)
    su = tables[-1].u[:, cm].sum(axis=2)
    Dh = (v * (su[:, :, None] + su[:, None, :])).sum(axis=(1, 2))
    return D, Dh


def order_vectors(m: int, N: int, include_zero_orders: bool):
    """Order vectors grouped by |n| in increasing order."""
    lo = 0 if include_zero_orders else 1
    vecs = list(itertools.product(range(lo, N + 1), repeat=m))
    layers = {}
    for n in vecs:
        layers.setdefault(sum(n), []).append(n)
    return [layers[s] for s in sorted(layers)]


@dataclass
class SeriesResult:
    value: complex
    last_shell: float
    shells: dict
    n_roots: list


def series_D(params: KernelParams, trunc: TruncationSpec = TruncationSpec(), which: str = "D",
             include_zero_orders: bool = True, tol: float = DEFAULT_TOL) -> SeriesResult:
    """Truncated series sum_n D_n / (n!)^2 (or the same with Dhat_n) at one point.

    With ``include_zero_orders`` the orders range over {0..N}^m, otherwise over
    {1..N}^m. The magnitude of the last included |n| layer is reported as a
    truncation proxy; with ``trunc.adaptive`` the series stops once a layer
    falls below ``trunc.tol``.
    """
    if which not in ("D", "Dhat"):
        raise ValueError("which must be 'D' or 'Dhat'")
    z = params.z[None, :]
    tables = level_tables(z, params.gamma, params.tau, params.beta, params.p, trunc, tol)
    total = 0j
    shells = {}
    last = 0.0
    for layer in order_vectors(params.m, trunc.N, include_zero_orders):
        lay = 0j
        for n in layer:
            if sum(n) == 0:
                val = 1.0 + 0j if which == "D" else 0j
            else:
                D, Dh = shell_grid(tables, n, hat=(which == "Dhat"))
                val = complex((D if which == "D" else Dh)[0] * order_prefactor(z, n)[0])
            shells[n] = val
            lay += val
        total += lay
        last = abs(lay)
        if trunc.adaptive and sum(layer[0]) > 0 and last < trunc.tol * max(1.0, abs(total)):
            break
    return SeriesResult(total, last, shells, [t.u.shape[1] for t in tables])


# ---------------------------------------------------------------------------
# the whole series as one determinant

def fredholm_blocks(tables, z, levels=None):
    """Matrix K(z) with det(I + K) = sum_n D_n / (n!)^2 over the retained levels.

    Points are (type, level, root) with type U or Uh. Stacking the m + 1
    Cauchy matrices of the chain block-diagonally, a U point of level j is a
    row of block j and a column of block j - 1, an Uh point the other way
    round; the entry is 1/(x + y) with x = u (U) or -u (Uh) and y = -u (U)
    or u (Uh). Reordering to a common row/column order costs (-1)^{|n|},
    which goes into the U weights together with the order prefactors.

    Returns (K, v) where v marks each point with its root if it lies on the
    last level (for the beta_m derivative) and 0 otherwise.
    """
    z = np.asarray(z, complex)
    m = len(tables)
    levels = range(m) if levels is None else levels
    xs, ys, cs, vs, rb, cb = [], [], [], [], [], []
    for i in levels:
        t = tables[i]
        u, wU, wV = t.u, t.wU, t.wV
        R = u.shape[1]
        pfU = (1.0 - z[:, i - 1] / z[:, i])[:, None] if i >= 1 else 1.0
        pfV = (1.0 - z[:, i + 1] / z[:, i])[:, None] if i + 1 < m else 1.0
        last = u if i == m - 1 else np.zeros_like(u)
        xs += [u, -u]
        ys += [-u, u]
        cs += [-wU * pfU, wV * pfV]
        vs += [last, last]
        rb += [np.full(R, i + 1), np.full(R, i)]
        cb += [np.full(R, i), np.full(R, i + 1)]
    G = z.shape[0]
    if not xs:
        return np.zeros((G, 0, 0), complex), np.zeros((G, 0), complex)
    x, y, c, v = (np.concatenate(a, axis=1) for a in (xs, ys, cs, vs))
    same = np.concatenate(rb)[:, None] == np.concatenate(cb)[None, :]
    den = np.where(same, x[:, :, None] + y[:, None, :], 1.0)
    if np.any(np.abs(den) < 1e-13 * (np.abs(x[:, :, None]) + np.abs(y[:, None, :]) + 1.0)):
        raise SingularityError("coincident roots across neighbouring levels")
    K = np.where(same, c[:, :, None] / den, 0.0)
    return K, v


def fredholm_det(tables, z, levels=None, hat: bool = False):
    """det(I + K) and, with ``hat``, the same series weighted by the level-m root sums.

    The weighted series is d/ds det(I + diag(e^{s v}) K) at s = 0, i.e.
    det(I + K) tr((I + K)^{-1} diag(v) K).
    """
    K, v = fredholm_blocks(tables, z, levels)
    G, P, _ = K.shape
    if P == 0:
        one = np.ones(G, complex)
        return one, (np.zeros(G, complex) if hat else None)
    A = K + np.eye(P)[None]
    if not np.all(np.isfinite(A)):
        raise SingularityError("non-finite Fredholm matrix")
    D = np.linalg.det(A)
    if not hat:
        return D, None
    X = np.linalg.solve(A, v[:, :, None] * K)
    return D, D * np.trace(X, axis1=1, axis2=2)


def fredholm_positive_orders(tables, z, hat: bool = False):
    """sum over n in {1, 2, ...}^m of D_n / (n!)^2 (and the hat series).

    Inclusion-exclusion over the set S of levels forced to order zero:
    sum_S (-1)^{|S|} det(I + K) restricted to the other levels.
    """
    m = len(tables)
    D = 0.0
    Dh = 0.0
    for S in itertools.product((0, 1), repeat=m):
        lev = [i for i in range(m) if not S[i]]
        d, dh = fredholm_det(tables, z, lev, hat)
        sg = -1.0 if sum(S) % 2 else 1.0
        D = D + sg * d
        if hat:
            Dh = Dh + sg * dh
    return D, (Dh if hat else None)


# ---------------------------------------------------------------------------
# brute-force oracle over left and right roots

def _vdm_rows(x):
    out = np.ones(x.shape[0], complex)
    for i in range(x.shape[1]):
        for j in range(i + 1, x.shape[1]):
            out *= x[:, j] - x[:, i]
    return out


def _cross_rows(x, y):
    return np.prod((x[:, :, None] - y[:, None, :]).reshape(x.shape[0], -1), axis=1)


def _cross_pairs(x, y):
    # out[e2, e1] = prod_{a in x[e2], b in y[e1]} (a - b)
    d = x[:, None, :, None] - y[None, :, None, :]
    return np.prod(d.reshape(x.shape[0], y.shape[0], -1), axis=2)


def shell_form_term(params: KernelParams, nvec, K: int, tol: float = DEFAULT_TOL) -> complex:
    """D_n(z) from the left/right root form, summing over ordered tuples.

    U^(i) ranges over tuples from L_{z_i} and V^(i) over tuples from
    R_{z_i} = -L_{z_i}; the summand uses Vandermonde-type products and
    fhat_i(w) = f_i(w) e^{2h(w, z_i)} / w with f_i odd-continued to Re w > 0.
    Ordered tuples with a repeated root are dropped (their Vandermonde
    vanishes); the coupling between neighbouring levels is applied as a
    matrix over tuple pairs.
    """
    m = params.m
    z = params.z
    dt, dg, db = params.increments()
    L = [enumerate_roots(zi, K).roots for zi in z]
    Rr = [-x for x in L]

    def f(i, w):
        e = -dt[i] * w**3 / 3.0 + dg[i] * w**2 / 2.0 + db[i] * w
        return np.exp(np.where(w.real < 0, e, -e))

    fhU = [f(i, L[i]) * np.exp(2.0 * h_left(L[i], z[i], tol)) / L[i] for i in range(m)]
    fhV = [f(i, Rr[i]) * np.exp(2.0 * h_right(Rr[i], z[i], tol)) / Rr[i] for i in range(m)]
    # h of level-i roots against the neighbouring z's
    hU_prev = [h_left(L[i], z[i - 1], tol) if i >= 1 else None for i in range(m)]
    hV_prev = [h_right(Rr[i], z[i - 1], tol) if i >= 1 else None for i in range(m)]
    hU_next = [h_left(L[i], z[i + 1], tol) if i + 1 < m else None for i in range(m)]
    hV_next = [h_right(Rr[i], z[i + 1], tol) if i + 1 < m else None for i in range(m)]

    pre = 1.0 + 0j
    for i in range(1, m):
        pre *= (1 - z[i - 1] / z[i]) ** nvec[i] * (1 - z[i] / z[i - 1]) ** nvec[i - 1]

    lev = []
    for i in range(m):
        tl = list(itertools.product(range(L[i].size), repeat=nvec[i]))
        tuples = np.array(tl, dtype=np.intp).reshape(len(tl), nvec[i])
        ia, ib = np.meshgrid(np.arange(len(tuples)), np.arange(len(tuples)), indexing="ij")
        ta, tb = tuples[ia.ravel()], tuples[ib.ravel()]
        U, V = L[i][ta], Rr[i][tb]
        num = _vdm_rows(U) ** 2 * _vdm_rows(V) ** 2
        ok = num != 0
        ta, tb, U, V = ta[ok], tb[ok], U[ok], V[ok]
        val = num[ok] / _cross_rows(U, V) ** 2
        val = val * np.prod(fhU[i][ta], axis=1) * np.prod(fhV[i][tb], axis=1)
        lev.append((ta, tb, U, V, val))

    vec = lev[0][4]
    for i in range(1, m):
        a1, b1, U1, V1, _ = lev[i - 1]
        a2, b2, U2, V2, val2 = lev[i]
        coup = _cross_pairs(U2, V1) * _cross_pairs(V2, U1)
        coup = coup / (_cross_pairs(U2, U1) * _cross_pairs(V2, V1))
        e2 = -np.sum(hV_prev[i][b2], axis=1) - np.sum(hU_prev[i][a2], axis=1)
        e1 = -np.sum(hV_next[i - 1][b1], axis=1) - np.sum(hU_next[i - 1][a1], axis=1)
        coup = coup * np.exp(e2[:, None] + e1[None, :])
        vec = (coup @ vec) * val2
    return complex(pre * np.sum(vec))


def series_D_shell_form(params: KernelParams, trunc: TruncationSpec = TruncationSpec(),
                       include_zero_orders: bool = True, tol: float = DEFAULT_TOL) -> complex:
    """sum over n in {0..N}^m (or {1..N}^m) of D_n / (n!)^2 by brute force."""
    total = 0j
    for layer in order_vectors(params.m, trunc.N, include_zero_orders):
        for n in layer:
            fact = math.prod(math.factorial(k) for k in n) ** 2
            total += (1.0 if sum(n) == 0 else shell_form_term(params, n, trunc.K, tol)) / fact
    return total
