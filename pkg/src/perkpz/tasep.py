"""Continuous-time TASEP on a ring of 2a sites with periodic step data.

Sites n = -a+1, ..., a are stored at index n + a - 1. Particles start on
n <= 0. A jump across the bond (n, n+1) raises the height at n by 2, so
h(n, t) = |n| + 2 J_n(t) on the fundamental domain, J_n the number of jumps
across that bond. At density 1/2 the current is 1/4, hence h(0, t) ~ t/2.

Dynamics use the superposition of the particles' rate-1 clocks: one global
exponential clock of rate a picks a particle uniformly at random and the
jump is attempted (a blocked attempt uses the tick). This has the same law
as independent per-particle clocks.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from .errors import DomainError
from .montecarlo import RandomStream


@dataclass
class RingState:
    a: int
    occupation: np.ndarray  # int8, length 2a
    jump_counts: np.ndarray  # int64 per bond (i, i+1), index i
    positions: np.ndarray  # int64 particle sites
    time: float = 0.0

    @property
    def size(self) -> int:
        return 2 * self.a

    def copy(self) -> "RingState":
        return replace(self, occupation=self.occupation.copy(), jump_counts=self.jump_counts.copy(),
                       positions=self.positions.copy())

    def particle_count(self) -> int:
        return int(self.occupation.sum())


def init_step(a: int) -> RingState:
    """Particles on n = -a+1..0, holes on 1..a."""
    a = int(a)
    if a < 1:
        raise DomainError("need a >= 1")
    occ = np.zeros(2 * a, dtype=np.int8)
    occ[:a] = 1
    return RingState(a, occ, np.zeros(2 * a, dtype=np.int64), np.arange(a, dtype=np.int64), 0.0)


def _index(state: RingState, n: int) -> int:
    return (int(n) + state.a - 1) % state.size


def height(state: RingState, n) -> int:
    """h(n, t); n is reduced into the fundamental domain -a+1..a."""
    i = _index(state, n)
    n0 = i - state.a + 1
    return abs(n0) + 2 * int(state.jump_counts[i])


def heights(state: RingState) -> np.ndarray:
    """h on the fundamental domain, in the order n = -a+1..a."""
    n = np.arange(-state.a + 1, state.a + 1)
    return np.abs(n) + 2 * state.jump_counts


def evolve(state: RingState, horizon: float, stream: RandomStream, block: int = 0,
           buffer: int | None = None) -> RingState:
    """Run the dynamics in place up to ``horizon`` and return the state.

    Uniforms come from ``stream`` block ``block`` (two per clock tick); the
    buffer is refilled from consecutive sub-blocks until the horizon is hit.
    """
    if horizon < state.time:
        raise DomainError("horizon before current time")
    n = state.positions.size
    if n == 0 or horizon == state.time:
        state.time = float(horizon)
        return state
    gen = stream.generator(block)
    if buffer is None:
        expected = n * (horizon - state.time)
        buffer = 2 * int(expected + 6.0 * math.sqrt(expected) + 64)
    while True:
        u = gen.random(buffer)
        t, _, _, done = _backend.tasep_run(state.occupation, state.jump_counts, state.positions,
                                           float(state.time), float(horizon), u)
        state.time = float(t)
        if done:
            return state


@dataclass(frozen=True)
class ScaledObservable:
    """h~_T(gamma, tau) = (h(gamma T^{2/3}, 2 tau T) - tau T) / (-T^{1/3}), T = (2a)^{3/2}."""

    gamma: float
    tau: float
    T: float

    def __post_init__(self):
        if not (self.tau > 0 and self.T > 0):
            raise DomainError("need tau > 0 and T > 0")

    @classmethod
    def for_ring(cls, gamma: float, tau: float, a: int) -> "ScaledObservable":
        return cls(float(gamma), float(tau), (2.0 * a) ** 1.5)

    @property
    def site(self) -> int:
        return int(round(self.gamma * self.T ** (2.0 / 3.0)))

    @property
    def time(self) -> float:
        return 2.0 * self.tau * self.T

    def value(self, h: float) -> float:
        return (h - self.tau * self.T) / (-self.T ** (1.0 / 3.0))


def ring_size_for(T: float) -> int:
    """a = [T^{2/3}] / 2 rounded down to an integer."""
    # guard: (L^{3/2})^{2/3} can land just under the integer L
    return max(1, int(math.floor(T ** (2.0 / 3.0) * (1 + 1e-12))) // 2)


def sample_scaled_heights(points, a: int, n_runs: int, stream: RandomStream,
                          jobs: int = 1) -> np.ndarray:
    """h~_T at the (gamma_i, tau_i) of ``points`` for independent runs.

    ``points`` holds (gamma, tau) or (gamma, tau, beta) entries. Run j uses
    block j of ``stream``; the result has shape (n_runs, len(points)).
    """
    obs = [ScaledObservable.for_ring(p[0], p[1], a) for p in points]
    order = sorted(range(len(obs)), key=lambda i: obs[i].time)

    def run(j):
        st = init_step(a)
        out = np.empty(len(obs))
        for i in order:
            evolve(st, obs[i].time, stream, block=(j << 8) | i)
            out[i] = obs[i].value(height(st, obs[i].site))
        return out

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(run, range(n_runs)))
    else:
        rows = [run(j) for j in range(n_runs)]
    return np.array(rows).reshape(n_runs, len(obs))


def empirical_scaled_cdf(points, a: int, n_runs: int, stream: RandomStream,
                         jobs: int = 1, samples: np.ndarray | None = None):
    """Fraction of runs with h~_T(gamma_i, tau_i) <= beta_i for all i, and its SE.

    ``points`` are (gamma, tau, beta) triples. Pass ``samples`` from
    ``sample_scaled_heights`` to reuse runs.
    """
    if a < 8:
        raise DomainError("need a >= 8")
    if n_runs < 1000:
        raise DomainError("need at least 1000 runs")
    beta = np.array([p[2] for p in points], float)
    if samples is None:
        samples = sample_scaled_heights(points, a, n_runs, stream, jobs)
    hit = np.all(samples <= beta[None, :], axis=1)
    est = float(hit.mean())
    return est, math.sqrt(est * (1.0 - est) / hit.size)


def ks_distance(samples, cdf) -> float:
    """sup_x |F_n(x) - F(x)| for a sample, checking both sides of every jump."""
    x = np.sort(np.asarray(samples, float))
    n = x.size
    ux = np.unique(x)
    F = np.array([cdf(v) for v in ux])
    right = np.searchsorted(x, ux, side="right") / n
    left = np.searchsorted(x, ux, side="left") / n
    return float(max(np.max(np.abs(right - F)), np.max(np.abs(left - F))))
