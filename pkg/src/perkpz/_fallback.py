"""Pure numpy versions of the compiled kernels (same signatures)."""
from __future__ import annotations

import math

import numpy as np

_CHUNK_ELEMS = 1 << 22


def _pair_products(u1, comb1, u2, comb2, sign):
    # out[g, I, I'] = prod_{a in I, b in I'} (u1[a] + sign * u2[b])
    g = u1.shape[0]
    c1, n1 = comb1.shape
    c2, n2 = comb2.shape
    out = np.ones((g, c1, c2), complex)
    if n1 == 0 or n2 == 0:
        return out
    pair = u1[:, :, None] + sign * u2[:, None, :]
    for a in range(n1):
        ia = comb1[:, a][:, None]
        for b in range(n2):
            out *= pair[:, ia, comb2[:, b][None, :]]
    return out


def level_factor(u, wU, wV, comb):
    """a[g, I, J] = (-1)^n [D(u_I) D(u_J) / prod(u_I + u_J)]^2 prod wU[I] prod wV[J]."""
    u = np.asarray(u, complex)
    g = u.shape[0]
    c, n = comb.shape
    if n == 0:
        return np.ones((g, 1, 1), complex)
    vdm = np.ones((g, c), complex)
    for a in range(n):
        for b in range(a + 1, n):
            vdm *= u[:, comb[:, b]] - u[:, comb[:, a]]
    pu = np.prod(wU[:, comb], axis=2)
    pv = np.prod(wV[:, comb], axis=2)
    cross = _pair_products(u, comb, u, comb, 1.0)
    out = (vdm[:, :, None] * vdm[:, None, :]) ** 2 / cross**2
    out *= pu[:, :, None] * pv[:, None, :]
    if n % 2:
        out = -out
    return out


def cross_contract(v, u1, comb1, u2, comb2):
    """Contract level states of one level against the next.

    v2[g, a, b] = sum_{I, J} v[g, I, J] PP[I, b] PP[J, a] / (QQ[I, a] QQ[J, b])
    with PP[I, I'] = prod (u1 + u2) and QQ[I, I'] = prod (u1 - u2) over pairs.
    """
    v = np.asarray(v, complex)
    g, c1, _ = v.shape
    c2 = comb2.shape[0]
    out = np.empty((g, c2, c2), complex)
    step = max(1, _CHUNK_ELEMS // max(1, c1 * c2 * c2))
    for s in range(0, g, step):
        sl = slice(s, min(g, s + step))
        pp = _pair_products(u1[sl], comb1, u2[sl], comb2, 1.0)
        qq = _pair_products(u1[sl], comb1, u2[sl], comb2, -1.0)
        iq = 1.0 / qq
        # N[J, a, b] = PP[J, a] / QQ[J, b];  M[I, a, b] = PP[I, b] / QQ[I, a]
        nmat = pp[:, :, :, None] * iq[:, :, None, :]
        t = np.einsum("gij,gjab->giab", v[sl], nmat)
        mmat = iq[:, :, :, None] * pp[:, :, None, :]
        out[sl] = np.einsum("giab,giab->gab", mmat, t)
    return out


def tasep_run(occ, jumps, pos, t_now, horizon, u):
    """Superposed-clock TASEP on a ring, driven by a buffer of uniforms.

    The total clock rate equals the particle count; each tick picks a
    particle uniformly and the jump is attempted (a blocked attempt uses up
    the tick). ``occ``, ``jumps`` and ``pos`` are updated in place.

    Returns:
        (time, uniforms used, jumps executed, reached horizon)
    """
    n = pos.shape[0]
    size = occ.shape[0]
    if n == 0:
        return horizon, 0, 0, True
    t = t_now
    executed = 0
    for j in range(u.shape[0] // 2):
        t += -math.log(1.0 - u[2 * j]) / n
        if t > horizon:
            return horizon, 2 * j + 2, executed, True
        k = int(u[2 * j + 1] * n)
        if k >= n:
            k = n - 1
        site = pos[k]
        nxt = site + 1
        if nxt == size:
            nxt = 0
        if occ[nxt] == 0:
            occ[site] = 0
            occ[nxt] = 1
            jumps[site] += 1
            pos[k] = nxt
            executed += 1
    return t, 2 * (u.shape[0] // 2), executed, False
