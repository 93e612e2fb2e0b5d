"""Monte Carlo oracles: Brownian bridges on the line and on R / rho Z.

Randomness comes from a counter-based Philox generator keyed by
(seed, stream_id); work is split into blocks whose counters are disjoint,
so any block can be regenerated on its own and results do not depend on
how blocks are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .specfun import CirclePoint, circle_distance, gaussian_density, wrapped_gaussian

DEFAULT_BLOCK = 1 << 14


@dataclass(frozen=True)
class RandomStream:
    """Reproducible random stream; distinct stream_ids are independent."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64 and 0 <= int(self.stream_id) < 2**64):
            raise DomainError("seed and stream_id must fit in 64 unsigned bits")

    def generator(self, block: int = 0) -> np.random.Generator:
        """Generator for the given block; blocks use disjoint counter ranges."""
        key = np.array([int(self.seed), int(self.stream_id)], dtype=np.uint64)
        counter = np.array([0, 0, 0, int(block)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def substream(self, stream_id: int) -> "RandomStream":
        return RandomStream(self.seed, stream_id)


def philox_uniforms(stream: RandomStream, n: int, block: int = 0) -> np.ndarray:
    return stream.generator(block).random(n)


@dataclass(frozen=True, eq=False)
class BridgePath:
    """Sampled values at ``times``; ``values`` has shape (n_paths, len(times)).

    For a circle bridge ``rho`` is set and values are representatives in
    [0, rho).
    """

    times: np.ndarray
    values: np.ndarray
    rho: float | None = None

    def points(self, path: int = 0):
        if self.rho is None:
            return list(self.values[path])
        return [CirclePoint(v, self.rho) for v in self.values[path]]


def _check_grid(times) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, float))
    if t.ndim != 1 or t.size == 0 or not (t[0] > 0 and t[-1] < 1 and np.all(np.diff(t) > 0)):
        raise DomainError("times must be strictly increasing in (0, 1)")
    return t


def _bridge_values(t: np.ndarray, end, rng: np.random.Generator, n: int) -> np.ndarray:
    """Brownian paths from 0 at time 0 to ``end`` at time 1, at times t.

    Sequential conditionals: given B(s) = x, B(t) has mean
    x + (end - x)(t - s)/(1 - s) and variance (t - s)(1 - t)/(1 - s).
    """
    end = np.broadcast_to(np.asarray(end, float), (n,))
    out = np.empty((n, t.size))
    x = np.zeros(n)
    s = 0.0
    g = rng.standard_normal((n, t.size))
    for j, tj in enumerate(t):
        frac = (tj - s) / (1.0 - s)
        x = x + (end - x) * frac + math.sqrt((tj - s) * (1.0 - tj) / (1.0 - s)) * g[:, j]
        out[:, j] = x
        s = tj
    return out


def sample_bridge(times, stream: RandomStream, n_paths: int = 1, block: int = 0) -> BridgePath:
    """Exact standard Brownian bridge values at the given times."""
    t = _check_grid(times)
    return BridgePath(t, _bridge_values(t, 0.0, stream.generator(block), int(n_paths)))


def winding_probabilities(rho: float, tol: float = 1e-16):
    """k and P(k) = phi_1(k rho) / phi_1^{(rho)}(0) over the classes that matter."""
    kmax = int(math.ceil(math.sqrt(-2.0 * math.log(tol)) / rho)) + 1
    k = np.arange(-kmax, kmax + 1)
    p = gaussian_density(k * rho, 1.0) / wrapped_gaussian(0.0, 1.0, rho)
    return k, p / p.sum()


def _circle_values(t, rho, rng, n):
    k, p = winding_probabilities(rho)
    wind = rng.choice(k, size=n, p=p)
    return np.mod(_bridge_values(t, wind * rho, rng, n), rho), wind


def sample_circle_bridge(times, rho: float, stream: RandomStream, n_paths: int = 1,
                         block: int = 0, return_winding: bool = False):
    """Brownian bridge on R / rho Z pinned to {0} at time 1.

    The winding class k of the endpoint is drawn with probability
    phi_1(k rho) / phi_1^{(rho)}(0); a line bridge from 0 to k rho is then
    projected onto the circle.
    """
    if not rho > 0:
        raise DomainError("rho must be positive")
    t = _check_grid(times)
    vals, wind = _circle_values(t, float(rho), stream.generator(block), int(n_paths))
    path = BridgePath(t, vals, float(rho))
    return (path, wind) if return_winding else path


# ---------------------------------------------------------------------------
# limit-law estimators

def _field_event(case, x, t, h, rho, rng, n):
    b2 = _bridge_values(t, 0.0, rng, n)
    if case == 3:
        field = b2
    elif case == 1:
        b1 = _bridge_values(t, 0.0, rng, n)
        field = b2 - np.abs(b1 - x)
    else:
        b1, _ = _circle_values(t, rho, rng, n)
        field = b2 - circle_distance(b1, x, rho)
    return np.all(field >= h, axis=1)


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    n_paths: int
    seed: int
    stream_id: int

    def __iter__(self):
        return iter((self.value, self.se))

    def as_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "n_paths": self.n_paths,
                "seed": self.seed, "stream_id": self.stream_id}


def estimate_limit_probability(case: int, x, t, h, rho: float | None, n_paths: int,
                               stream: RandomStream, jobs: int = 1,
                               block_size: int = DEFAULT_BLOCK) -> MCEstimate:
    """Plain Monte Carlo of P(field(x_i, t_i) >= h_i for all i).

    Case 1: B2(t) - |B1(t) - x|; Case 2: B2(t) - dist_rho(B1^rho(t), {x});
    Case 3: B(t). Bridges are independent and pinned at time 1. Blocks of
    ``block_size`` paths are counted independently and added in block order.
    """
    if case not in (1, 2, 3):
        raise DomainError("case must be 1, 2 or 3")
    if n_paths < 100:
        raise DomainError("need at least 100 paths")
    t = _check_grid(t)
    x = np.broadcast_to(np.asarray(x, float), t.shape).copy()
    h = np.broadcast_to(np.asarray(h, float), t.shape).copy()
    if case == 2 and not (rho is not None and rho > 0):
        raise DomainError("case 2 needs rho > 0")
    sizes = [block_size] * (n_paths // block_size)
    if n_paths % block_size:
        sizes.append(n_paths % block_size)

    def count(j):
        return int(_field_event(case, x, t, h, rho, stream.generator(j), sizes[j]).sum())

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            hits = list(ex.map(count, range(len(sizes))))
    else:
        hits = [count(j) for j in range(len(sizes))]
    phat = sum(hits) / n_paths
    se = math.sqrt(max(phat * (1.0 - phat), 0.0) / n_paths)
    return MCEstimate(phat, se, int(n_paths), int(stream.seed), int(stream.stream_id))


def event_union_side(X, Y, rho: float):
    """Indicator of the union over k of {X - Y >= -rho k, X + Y in [rho k, rho (k+1))}.

    Only k = floor((X + Y) / rho) can satisfy the bracket condition.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    k = np.floor((X + Y) / rho)
    return X - Y >= -rho * k


def event_distance_side(X, Y, rho: float):
    """Indicator of {X >= dist_rho({Y}, {0})}."""
    return np.asarray(X, float) >= circle_distance(Y, 0.0, rho)


def event_identity_check(n_samples: int, rho: float, stream: RandomStream,
                         block_size: int = 1 << 18) -> int:
    """Draw standard normal pairs (X, Y) and count samples where the two
    descriptions of the event disagree."""
    if not rho > 0:
        raise DomainError("rho must be positive")
    bad = 0
    done, j = 0, 0
    while done < n_samples:
        n = min(block_size, n_samples - done)
        g = stream.generator(j).standard_normal((2, n))
        bad += int(np.count_nonzero(event_union_side(g[0], g[1], rho) != event_distance_side(g[0], g[1], rho)))
        done += n
        j += 1
    return bad
