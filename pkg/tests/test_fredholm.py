import cmath
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perkpz.distribution import ConditionalQuery, ContourSpec
from perkpz.errors import DomainError, SingularityError
from perkpz.fredholm import (
    KernelParams, TruncationSpec, shell_form_term, cauchy_det, enumerate_roots, factor_E, factor_H,
    factor_R, factor_Rhat, fredholm_det, fredholm_positive_orders, level_tables, prefactor_C,
    series_D, series_D_shell_form,
)
from perkpz.specfun import A1, A2, Bfun, h_left, h_right

EXACT = TruncationSpec(K=2, N=1, adaptive=False, prune=0.0)


def params(m, z, p=1.3):
    return KernelParams(gamma=[0.2, -0.3, 0.1][:m], tau=[0.5, 1.0, 1.4][:m], beta=[0.3, 0.8, 1.0][:m], p=p, z=z)


class TestRoots:
    @given(st.floats(1e-6, 0.9), st.floats(-math.pi, math.pi), st.integers(0, 15))
    @settings(max_examples=80)
    def test_residual_and_branch(self, r, th, K):
        z = r * cmath.exp(1j * th)
        u = enumerate_roots(z, K).roots
        assert u.size == 2 * K + 1
        assert np.all(np.abs(np.exp(-u * u / 2) - z) <= 1e-12 * abs(z))
        assert np.all(u.real < 0)
        assert np.all(np.abs(u) >= math.sqrt(-2 * math.log(r)) * (1 - 1e-12))
        assert np.unique(np.round(u, 10)).size == u.size

    def test_domain(self):
        with pytest.raises(DomainError):
            enumerate_roots(0.0, 2)
        with pytest.raises(DomainError):
            enumerate_roots(1.0, 2)

    def test_right_roots_are_negations(self):
        u = enumerate_roots(0.3j, 3).roots
        v = -u
        assert np.all(v.real > 0)
        assert np.allclose(np.exp(-v * v / 2), 0.3j, atol=1e-13)
        assert h_right(v[2], 0.3j) == h_left(u[2], 0.3j)


class TestCauchy:
    def test_one_by_one(self):
        assert cauchy_det([2.0], [3.0]) == pytest.approx(1 / 5)

    def test_two_by_two(self):
        X, Y = np.array([1.0, 2.0]), np.array([3.0, 4.0])
        assert cauchy_det(X, Y) == pytest.approx(np.linalg.det(1 / (X[:, None] + Y[None, :])), rel=1e-14)

    def test_repeated_entry(self):
        assert cauchy_det([1.0, 1.0], [3.0, 4.0]) == 0

    def test_singular(self):
        with pytest.raises(SingularityError):
            cauchy_det([1.0, 2.0], [-1.0, 4.0])

    def test_size_mismatch(self):
        with pytest.raises(DomainError):
            cauchy_det([1.0, 2.0], [3.0])

    @given(st.integers(1, 4), st.integers(0, 10**6))
    @settings(max_examples=60)
    def test_matches_determinant(self, n, seed):
        rng = np.random.default_rng(seed)
        # well separated: x in right half plane, y shifted further right
        X = rng.uniform(0.5, 2, n) + 1j * rng.uniform(-1, 1, n) + np.arange(n)
        Y = rng.uniform(0.5, 2, n) + 1j * rng.uniform(-1, 1, n) + 1.5 * np.arange(n)
        ref = np.linalg.det(1 / (X[:, None] + Y[None, :]))
        assert abs(cauchy_det(X, Y) - ref) <= 1e-9 * abs(ref)


class TestFactors:
    def test_E_empty(self):
        prm = params(2, [0.1, 0.3])
        e = np.zeros(0, complex)
        assert factor_E(prm, [e, e], [e, e]) == 1

    def test_E_polynomial(self):
        prm = params(1, [0.2 + 0.1j])
        u, uh = enumerate_roots(prm.z[0], 1).roots[[0, 2]]
        p = prm.p
        expo = lambda s, sg: -prm.tau[0] * s**3 / (3 * p**1.5) + sg * prm.gamma[0] * s**2 / (2 * p) + prm.beta[0] * s / p**0.5
        assert factor_E(prm, [[u]], [[uh]]) == pytest.approx(cmath.exp(expo(u, 1) + expo(uh, -1)), rel=1e-13)

    def test_E_gamma_flip_swaps_roles(self):
        prm = params(2, [0.1, 0.3])
        flip = KernelParams(-prm.gamma, prm.tau, prm.beta, prm.p, prm.z)
        U = [enumerate_roots(z, 2).roots[:2] for z in prm.z]
        H = [enumerate_roots(z, 2).roots[2:4] for z in prm.z]
        assert factor_E(prm, U, H) == pytest.approx(factor_E(flip, H, U), rel=1e-13)

    def test_H_vanishing_z(self):
        prm = params(2, [1e-300, 2e-300])
        U = [enumerate_roots(z, 1).roots[:1] for z in prm.z]
        assert factor_H(prm, U, U) == pytest.approx(1.0, abs=1e-12)

    def test_H_one_level(self):
        z = 0.3 - 0.2j
        prm = params(1, [z])
        u, uh = enumerate_roots(z, 2).roots[[1, 4]]
        assert factor_H(prm, [[u]], [[uh]]) == pytest.approx(cmath.exp(2 * h_left(u, z) + 2 * h_left(uh, z)), rel=1e-13)

    @given(st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_H_bound(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 4))
        r = np.sort(rng.uniform(0.01, 0.5, m))
        z = r * np.exp(1j * rng.uniform(-np.pi, np.pi, m))
        prm = params(m, z)
        n = rng.integers(0, 3, m)
        U = [rng.choice(enumerate_roots(zi, 4).roots, k, replace=False) for zi, k in zip(z, n)]
        H = [rng.choice(enumerate_roots(zi, 4).roots, k, replace=False) for zi, k in zip(z, n)]
        bound = 8 * n.sum() * r.max() * math.exp(8 * n.sum() * r.max())
        assert abs(factor_H(prm, U, H) - 1) <= bound + 1e-14

    def test_R_one_level(self):
        prm = params(1, [0.3])
        u, uh = enumerate_roots(0.3, 2).roots[[1, 3]]
        assert factor_R(prm, [[u]], [[uh]]) == pytest.approx(-1 / ((u + uh) ** 2 * u * uh), rel=1e-13)

    def test_R_repeated_root(self):
        prm = params(2, [0.1, 0.3])
        r0 = enumerate_roots(0.1, 2).roots
        r1 = enumerate_roots(0.3, 2).roots
        assert factor_R(prm, [[r0[0], r0[0]], [r1[1]]], [[r0[1], r0[2]], [r1[2]]]) == 0

    def test_Rhat_ratio(self):
        prm = params(2, [0.1, 0.3])
        r0 = enumerate_roots(0.1, 2).roots
        r1 = enumerate_roots(0.3, 2).roots
        U, H = [[r0[0]], [r1[1], r1[3]]], [[r0[2]], [r1[0], r1[4]]]
        R = factor_R(prm, U, H)
        assert factor_Rhat(prm, U, H) / R == pytest.approx(sum(U[1]) + sum(H[1]), rel=1e-13)


def brute_force_D(prm, N, K, hat=False, zero=True):
    """Ordered double sum over root tuples of H R E, with the order prefactors."""
    roots = [enumerate_roots(z, K).roots for z in prm.z]
    m = prm.m
    total = 0j
    for n in itertools.product(range(0 if zero else 1, N + 1), repeat=m):
        if sum(n) == 0:
            total += 0 if hat else 1
            continue
        pre = 1.0
        for i in range(1, m):
            pre *= (1 - prm.z[i - 1] / prm.z[i]) ** n[i] * (1 - prm.z[i] / prm.z[i - 1]) ** n[i - 1]
        s = 0j
        choices = [list(itertools.product(range(r.size), repeat=k)) for r, k in zip(roots, n)]
        for sel in itertools.product(*[list(itertools.product(c, c)) for c in choices]):
            U = [roots[i][list(sel[i][0])] for i in range(m)]
            H = [roots[i][list(sel[i][1])] for i in range(m)]
            R = (factor_Rhat if hat else factor_R)(prm, U, H)
            if R != 0:
                s += factor_H(prm, U, H) * R * factor_E(prm, U, H)
        total += pre * s / math.prod(math.factorial(k) for k in n) ** 2
    return total


class TestSeries:
    def test_zero_order_only(self):
        prm = params(2, [0.1, 0.3])
        assert series_D(prm, TruncationSpec(K=2, N=0)).value == 1
        assert series_D_shell_form(prm, TruncationSpec(K=2, N=0)) == 1

    def test_one_level_enumeration(self):
        prm = params(1, [0.35 * cmath.exp(0.3j)])
        res = series_D(prm, EXACT, "D", True)
        ref = brute_force_D(prm, 1, 2)
        assert abs(res.value - ref) <= 1e-12 * abs(ref)

    @pytest.mark.parametrize("which", ["D", "Dhat"])
    def test_two_level_enumeration(self, which):
        prm = params(2, [0.12 * cmath.exp(0.5j), 0.3 * cmath.exp(-0.8j)])
        tr = TruncationSpec(K=1, N=2, adaptive=False, prune=0.0)
        res = series_D(prm, tr, which, include_zero_orders=(which == "D"))
        ref = brute_force_D(prm, 2, 1, hat=(which == "Dhat"), zero=(which == "D"))
        assert abs(res.value - ref) <= 1e-11 * max(1.0, abs(ref))

    @pytest.mark.parametrize("m,K", [(1, 2), (1, 3), (2, 2), (2, 3)])
    def test_shell_form(self, m, K):
        z = [0.15 * cmath.exp(0.4j), 0.35 * cmath.exp(-1.1j)][:m] if m == 2 else [0.3 * cmath.exp(0.4j)]
        prm = params(m, z)
        res = series_D(prm, TruncationSpec(K=K, N=2, adaptive=False, prune=0.0), "D", True)
        for n, v in res.shells.items():
            if sum(n) == 0:
                continue
            ob = shell_form_term(prm, n, K) / math.prod(math.factorial(k) for k in n) ** 2
            assert abs(v - ob) <= 1e-9 * abs(ob), n

    def test_shell_decay_on_pinched_contours(self):
        for ell, p in ((4.0, 1.0), (8.0, 1.0), (4.0, 2.0)):
            q = ConditionalQuery((0.0,), (0.5,), (0.0,), ell, p)
            c = ContourSpec.pinched(2, ell, p)
            pt = q.point()
            z = np.array(c.radii) * np.exp(1j * np.array([0.7, -1.9]))
            prm = KernelParams(pt.gamma, pt.tau, pt.beta, p, z)
            res = series_D(prm, TruncationSpec(K=6, N=3, adaptive=False), "D", True)
            layers = [sum(abs(v) for n, v in res.shells.items() if sum(n) == j) for j in range(1, 5)]
            assert all(b < a for a, b in zip(layers, layers[1:])), layers


class TestFredholm:
    def _tables(self, prm, K=4):
        return level_tables(prm.z[None, :], prm.gamma, prm.tau, prm.beta, prm.p,
                            TruncationSpec(K=K, prune=0.0))

    def test_determinant_equals_series(self):
        prm = params(2, [0.12 * cmath.exp(0.5j), 0.3 * cmath.exp(-0.8j)])
        D, Dh = fredholm_det(self._tables(prm), prm.z[None, :], hat=True)
        tr = TruncationSpec(K=4, N=5, adaptive=False, prune=0.0)
        assert abs(D[0] - series_D(prm, tr, "D", True).value) < 1e-12
        assert abs(Dh[0] - series_D(prm, tr, "Dhat", True).value) < 1e-12

    def test_positive_orders(self):
        prm = params(2, [0.12 * cmath.exp(0.5j), 0.3 * cmath.exp(-0.8j)])
        D, Dh = fredholm_positive_orders(self._tables(prm), prm.z[None, :], hat=True)
        tr = TruncationSpec(K=4, N=5, adaptive=False, prune=0.0)
        assert abs(D[0] - series_D(prm, tr, "D", False).value) < 1e-12
        assert abs(Dh[0] - series_D(prm, tr, "Dhat", False).value) < 1e-12

    def test_empty_levels(self):
        prm = params(1, [0.3])
        D, _ = fredholm_det(self._tables(prm), prm.z[None, :], levels=[])
        assert D[0] == 1


class TestPrefactor:
    def test_small_z(self):
        prm = params(2, [1e-8, 2e-8])
        assert abs(prefactor_C(prm, "Cbullet") - 1) < 1e-6

    def test_one_level_composition(self):
        z = 0.3 + 0.2j
        prm = params(1, [z])
        ref = cmath.exp(prm.beta[0] * A1(z) / prm.p**0.5 + prm.tau[0] * A2(z) / prm.p**1.5 + 2 * Bfun(z, z))
        assert prefactor_C(prm) == pytest.approx(ref, rel=1e-13)

    def test_bullet_relation(self):
        prm = params(2, [0.1 + 0.05j, 0.3 - 0.1j])
        z = prm.z
        ratio = prefactor_C(prm, "Cbullet") / prefactor_C(prm, "C")
        assert ratio == pytest.approx((z[0] - z[1]) / z[0], rel=1e-13)

    def test_equal_points_singular(self):
        prm = KernelParams([0, 0], [0.5, 1], [0, 0], 1.0, [0.2, 0.2], ordering=None)
        with pytest.raises(SingularityError):
            prefactor_C(prm)

    def test_bullet_decays_with_ell_p(self):
        devs = []
        for ellp in (4.0, 8.0, 16.0):
            q = ConditionalQuery((0.0,), (0.5,), (0.0,), ellp, 1.0)
            c = ContourSpec.pinched(2, ellp, 1.0)
            pt = q.point()
            th = np.linspace(0, 2 * np.pi, 9)[:-1]
            worst = 0.0
            for a, b in itertools.product(th, th):
                z = np.array(c.radii) * np.exp(1j * np.array([a, b]))
                worst = max(worst, abs(prefactor_C(KernelParams(pt.gamma, pt.tau, pt.beta, 1.0, z), "Cbullet") - 1))
            devs.append(worst)
        assert devs[0] > devs[1] > devs[2]
