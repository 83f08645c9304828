"""Power-law advice distributions over bit strings of Hamming weight one or two.

Positions use 1-based indices ``i`` in the probability formulas (the
dividing index ranges over 2..n) and 0-based indices inside bit arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MODES = ("find-both", "find-first")


class AdviceError(ValueError):
    pass


@dataclass(frozen=True)
class AdviceDistribution:
    n: int
    k: float
    p_plus: float = 1.0
    mode: str = "find-both"

    def __post_init__(self):
        if self.n < 2:
            raise AdviceError("n must be at least 2")
        if not -2 < self.k < -1.5:
            raise AdviceError("exponent k must lie in (-2, -3/2)")
        if self.mode not in MODES:
            raise AdviceError(f"mode must be one of {MODES}")
        if not 0 <= self.p_plus <= 1:
            raise AdviceError("p_plus must be a probability")
        if self.mode == "find-both" and self.p_plus != 1:
            raise AdviceError("find-both mode always sets the dividing bit")

    @property
    def indices(self) -> np.ndarray:
        return np.arange(2, self.n + 1)

    @property
    def normalizer(self) -> float:
        """A_n with p(E_i*) = A_n (i-1)^k."""
        return 1.0 / float(np.sum((self.indices - 1.0) ** self.k))

    def dividing_probs(self) -> np.ndarray:
        """p(E_i*) for i = 2..n."""
        w = (self.indices - 1.0) ** self.k
        return w / w.sum()

    def low_one_probs(self) -> np.ndarray:
        """p(E_i^dagger) for i = 1..n: the low 1 sits at i."""
        p = self.dividing_probs()
        # low one at i comes from every dividing index j > i with prob 1/(j-1)
        share = p / (self.indices - 1.0)
        tail = np.cumsum(share[::-1])[::-1]  # tail[j-2] = sum_{j' >= j} share
        out = np.zeros(self.n)
        out[: self.n - 1] = tail  # i = 1..n-1 uses j >= i+1
        return out

    def bit_marginals(self) -> np.ndarray:
        """P(bit i = 1), 0-based positions."""
        out = self.low_one_probs().copy()
        out[1:] += self.p_plus * self.dividing_probs()
        return out


def sample_advice(dist: AdviceDistribution, rng: np.random.Generator) -> np.ndarray:
    p = dist.dividing_probs()
    i = int(rng.choice(dist.indices, p=p))
    low = int(rng.integers(1, i))
    x = np.zeros(dist.n, dtype=np.int8)
    x[low - 1] = 1
    if dist.mode == "find-both" or rng.random() < dist.p_plus:
        x[i - 1] = 1
    return x


def support(dist: AdviceDistribution) -> dict[tuple, float]:
    """Exact probability of every string the distribution can produce."""
    probs: dict[tuple, float] = {}
    n = dist.n
    for i, pi in zip(dist.indices, dist.dividing_probs()):
        for low in range(1, i):
            base = [0] * n
            base[low - 1] = 1
            share = pi / (i - 1)
            both = list(base)
            both[i - 1] = 1
            key = tuple(both)
            probs[key] = probs.get(key, 0.0) + share * dist.p_plus
            if dist.p_plus < 1:
                key = tuple(base)
                probs[key] = probs.get(key, 0.0) + share * (1 - dist.p_plus)
    return probs


def support_domain(n: int, mode: str) -> list[tuple]:
    """Every string of weight two, plus weight one in find-first mode."""
    pairs = [tuple(1 if k in c else 0 for k in range(n)) for c in itertools.combinations(range(n), 2)]
    if mode == "find-first":
        singles = [tuple(1 if k == i else 0 for k in range(n)) for i in range(n - 1)]
        return singles + pairs
    return pairs


def classical_baseline_queries(x, mode: str) -> int:
    """Cost of reading the bits in order until the answer is known."""
    ones = [i + 1 for i, b in enumerate(x) if int(b)]
    if len(ones) not in (1, 2):
        raise AdviceError("advice strings have Hamming weight one or two")
    if mode == "find-both":
        if len(ones) != 2:
            raise AdviceError("find-both inputs have two ones")
        return ones[1]
    if mode == "find-first":
        return ones[0]
    raise AdviceError(f"unknown mode {mode!r}")


def exact_classical_average(dist: AdviceDistribution) -> float:
    """Sum over the support of probability times in-order cost."""
    if dist.mode == "find-both":
        return float(np.sum(dist.dividing_probs() * dist.indices))
    return float(np.sum(dist.low_one_probs() * np.arange(1, dist.n + 1)))


@dataclass(frozen=True)
class SumBoundsReport:
    k: float
    ns: np.ndarray
    linear: np.ndarray       # sum p(E_i*) i
    sqrt: np.ndarray         # sum p(E_i*) sqrt(i)
    linear_low: np.ndarray   # sum p(E_i^dagger) i
    sqrt_low: np.ndarray
    slope: float
    slope_low: float
    normalizer_ok: bool
    sqrt_bounded: bool

    @property
    def passed(self) -> bool:
        return (abs(self.slope - (self.k + 2)) <= 0.15 and self.normalizer_ok
                and self.sqrt_bounded)


def _loglog_slope(ns, values) -> float:
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def _sqrt_bounded(ns, values, start: int = 2 ** 8, wobble: float = 0.05) -> bool:
    if not np.all(values <= 2 * values[0]):
        return False
    tail = values[ns >= start]
    return bool(np.all(tail[1:] <= tail[:-1] * (1 + wobble)))


def verify_sum_bounds(k: float, ns=None) -> SumBoundsReport:
    ns = np.asarray(ns if ns is not None else [2 ** e for e in range(6, 17)])
    lin, sq, lin_low, sq_low, ok = [], [], [], [], True
    for n in ns:
        d = AdviceDistribution(int(n), k)
        p, idx = d.dividing_probs(), d.indices
        low = d.low_one_probs()
        pos = np.arange(1, n + 1)
        lin.append(np.sum(p * idx))
        sq.append(np.sum(p * np.sqrt(idx)))
        lin_low.append(np.sum(low * pos))
        sq_low.append(np.sum(low * np.sqrt(pos)))
        ok &= (k + 1) / ((n - 1) ** (k + 1) + k) <= d.normalizer * (1 + 1e-12)
    arr = [np.array(v) for v in (lin, sq, lin_low, sq_low)]
    return SumBoundsReport(
        k=k, ns=ns, linear=arr[0], sqrt=arr[1], linear_low=arr[2], sqrt_low=arr[3],
        slope=_loglog_slope(ns, arr[0]), slope_low=_loglog_slope(ns, arr[2]),
        normalizer_ok=bool(ok),
        sqrt_bounded=_sqrt_bounded(ns, arr[1]) and _sqrt_bounded(ns, arr[3]),
    )


def quantum_reference_bound(dist: AdviceDistribution) -> float:
    """Average of sqrt(G |path| log n) with constants dropped; a shape reference only."""
    log_n = math.log2(dist.n)
    if dist.mode == "find-both":
        return float(np.sum(dist.dividing_probs() * np.sqrt(2 * dist.indices * log_n)))
    pos = np.arange(1, dist.n + 1)
    return float(np.sum(dist.low_one_probs() * np.sqrt(pos * log_n)))
