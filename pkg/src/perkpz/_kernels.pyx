# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: Cauchy-chain contraction and the ring TASEP sweep."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()

ctypedef double complex cplx


def level_factor(cplx[:, ::1] u, cplx[:, ::1] wU, cplx[:, ::1] wV, Py_ssize_t[:, ::1] comb):
    cdef Py_ssize_t G = u.shape[0], C = comb.shape[0], n = comb.shape[1]
    cdef Py_ssize_t g, I, J, a, b
    cdef cplx vi, vj, pu, pv, den
    out_arr = np.empty((G, C, C), dtype=np.complex128)
    cdef cplx[:, :, ::1] out = out_arr
    if n == 0:
        out_arr[...] = 1.0
        return out_arr
    vdm_arr = np.empty(C, dtype=np.complex128)
    pw_arr = np.empty(C, dtype=np.complex128)
    pv_arr = np.empty(C, dtype=np.complex128)
    cdef cplx[::1] vdm = vdm_arr, pwu = pw_arr, pwv = pv_arr
    cdef double sgn = -1.0 if n % 2 else 1.0
    for g in range(G):
        for I in range(C):
            vi = 1.0
            pu = 1.0
            pv = 1.0
            for a in range(n):
                pu = pu * wU[g, comb[I, a]]
                pv = pv * wV[g, comb[I, a]]
                for b in range(a + 1, n):
                    vi = vi * (u[g, comb[I, b]] - u[g, comb[I, a]])
            vdm[I] = vi
            pwu[I] = pu
            pwv[I] = pv
        for I in range(C):
            for J in range(C):
                den = 1.0
                for a in range(n):
                    for b in range(n):
                        den = den * (u[g, comb[I, a]] + u[g, comb[J, b]])
                vi = vdm[I] * vdm[J] / den
                out[g, I, J] = sgn * vi * vi * pwu[I] * pwv[J]
    return out_arr


def cross_contract(cplx[:, :, ::1] v, cplx[:, ::1] u1, Py_ssize_t[:, ::1] comb1,
                   cplx[:, ::1] u2, Py_ssize_t[:, ::1] comb2):
    cdef Py_ssize_t G = v.shape[0], C1 = comb1.shape[0], n1 = comb1.shape[1]
    cdef Py_ssize_t C2 = comb2.shape[0], n2 = comb2.shape[1]
    cdef Py_ssize_t g, I, J, A, B, a, b
    cdef cplx pp, qq, x, y, acc, inner
    out_arr = np.empty((G, C2, C2), dtype=np.complex128)
    cdef cplx[:, :, ::1] out = out_arr
    pp_arr = np.empty((C1, C2), dtype=np.complex128)
    iq_arr = np.empty((C1, C2), dtype=np.complex128)
    cdef cplx[:, ::1] PP = pp_arr, IQ = iq_arr
    for g in range(G):
        for I in range(C1):
            for A in range(C2):
                pp = 1.0
                qq = 1.0
                for a in range(n1):
                    x = u1[g, comb1[I, a]]
                    for b in range(n2):
                        y = u2[g, comb2[A, b]]
                        pp = pp * (x + y)
                        qq = qq * (x - y)
                PP[I, A] = pp
                IQ[I, A] = 1.0 / qq
        for A in range(C2):
            for B in range(C2):
                acc = 0.0
                for I in range(C1):
                    inner = 0.0
                    for J in range(C1):
                        inner = inner + v[g, I, J] * PP[J, A] * IQ[J, B]
                    acc = acc + PP[I, B] * IQ[I, A] * inner
                out[g, A, B] = acc
    return out_arr


def tasep_run(cnp.int8_t[::1] occ, cnp.int64_t[::1] jumps, cnp.int64_t[::1] pos,
              double t_now, double horizon, double[::1] u):
    cdef Py_ssize_t n = pos.shape[0], size = occ.shape[0]
    cdef Py_ssize_t j, k, site, nxt, nu = u.shape[0] // 2
    cdef double t = t_now
    cdef long executed = 0
    if n == 0:
        return horizon, 0, 0, True
    for j in range(nu):
        t += -log(1.0 - u[2 * j]) / n
        if t > horizon:
            return horizon, 2 * j + 2, executed, True
        k = <Py_ssize_t>(u[2 * j + 1] * n)
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
    return t, 2 * nu, executed, False
