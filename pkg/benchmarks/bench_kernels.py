"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on identical inputs in both backends; the script checks
the outputs agree before reporting timings.
"""
from __future__ import annotations

import argparse
import itertools
import timeit

import numpy as np

from perkpz import _fallback

try:
    from perkpz import _kernels
except ImportError:
    _kernels = None


def _combos(R, n):
    return np.array(list(itertools.combinations(range(R), n)), dtype=np.intp).reshape(-1, n)


def chain_inputs(G=2048, R=8, n=2, seed=0):
    rng = np.random.default_rng(seed)

    def roots():
        return np.ascontiguousarray(1.0 + rng.random((G, R)) + 1j * rng.normal(size=(G, R)))

    u1, u2 = roots(), roots()
    wU = np.ascontiguousarray(rng.normal(size=(G, R)) + 1j * rng.normal(size=(G, R)))
    wV = np.ascontiguousarray(rng.normal(size=(G, R)) + 1j * rng.normal(size=(G, R)))
    c = _combos(R, n)
    return u1, u2, wU, wV, c


def tasep_inputs(a=32, ticks=200_000, seed=0):
    rng = np.random.default_rng(seed)
    occ = np.zeros(2 * a, np.int8)
    occ[:a] = 1
    return occ, np.zeros(2 * a, np.int64), np.arange(a, dtype=np.int64), rng.random(2 * ticks)


def cases():
    u1, u2, wU, wV, c = chain_inputs()
    v = np.ascontiguousarray(_fallback.level_factor(u1, wU, wV, c))
    yield "level_factor", lambda k: k.level_factor(u1, wU, wV, c)
    yield "cross_contract", lambda k: k.cross_contract(v, u1, c, u2, c)

    def tasep(k):
        occ, jumps, pos, u = tasep_inputs()
        r = k.tasep_run(occ, jumps, pos, 0.0, 1e9, u)
        return np.concatenate([jumps, [r[2]]])

    yield "tasep_run", tasep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':16s} {'fallback [ms]':>14s} {'compiled [ms]':>14s} {'speedup':>8s}")
    for name, fn in cases():
        ref = fn(_fallback)
        tf = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{name:16s} {tf * 1e3:14.2f} {'-':>14s} {'-':>8s}")
            continue
        out = fn(_kernels)
        if not np.allclose(out, ref, rtol=1e-10, atol=0):
            raise SystemExit(f"{name}: backends disagree")
        tc = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
        print(f"{name:16s} {tf * 1e3:14.2f} {tc * 1e3:14.2f} {tf / tc:8.1f}x")


if __name__ == "__main__":
    main()
