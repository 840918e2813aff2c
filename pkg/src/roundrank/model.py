"""Ground truth permutations, the comparison oracle, and counter-keyed noise.

Items are 0-based labels, ranks are 1-based with rank 1 the best item.  Every
noise variate is a pure function of ``(run_seed, round_index, ordinal)`` so a
batch can be evaluated in any order, or only partially, with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.stats import binom

__all__ = [
    "ComparisonOutcome",
    "ComparisonRequest",
    "GroundTruth",
    "InvalidParameter",
    "NoiseCoordinates",
    "NoiseModel",
    "SelfComparison",
    "compare",
    "make_ground_truth",
    "true_sorted_topk",
    "uniforms",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_ROUND_SALT = 0xD1B54A32D192ED03


class InvalidParameter(ValueError):
    pass


class SelfComparison(ValueError):
    pass


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; arrays of uint64 wrap silently on overflow
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _round_key(run_seed: int, round_index: int) -> np.uint64:
    seed = np.array([run_seed & _MASK64], dtype=np.uint64)
    salted = _mix64(seed) ^ np.uint64((round_index * _ROUND_SALT) & _MASK64)
    return _mix64(_mix64(salted))[0]


def uniforms(run_seed: int, round_index: int, ordinals) -> np.ndarray:
    """Uniform variates in [0, 1) for the given request ordinals of one round.

    A splitmix64 stream keyed on (run_seed, round_index) and indexed by the
    ordinal, so any subset of ordinals can be drawn without the rest.
    """
    ords = np.asarray(ordinals, dtype=np.uint64)
    key = _round_key(run_seed, round_index)
    bits = _mix64(key + ords * _GOLDEN)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class NoiseModel:
    kind: Literal["noiseless", "bernoulli"] = "bernoulli"
    p: float = 2.0 / 3.0

    def __post_init__(self):
        if self.kind not in ("noiseless", "bernoulli"):
            raise InvalidParameter(f"unknown noise kind {self.kind!r}")
        if self.kind == "bernoulli" and not 0.5 < self.p <= 1.0:
            raise InvalidParameter(f"p must lie in (1/2, 1], got {self.p}")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls("noiseless", 1.0)

    @property
    def is_noiseless(self) -> bool:
        return self.kind == "noiseless" or self.p == 1.0


@dataclass(frozen=True)
class GroundTruth:
    """Hidden order of a universe.  ``rank_of[i]`` is the rank of item ``i``.

    Padded universes append dummy items after the ``n_real`` original ones;
    top dummies come first and outrank every real item, bottom dummies follow
    and rank below every real item.
    """

    rank_of: np.ndarray
    seed: int = 0
    n_real: int | None = None
    n_top_dummies: int = 0

    def __post_init__(self):
        ranks = np.asarray(self.rank_of, dtype=np.int64)
        ranks.setflags(write=False)
        object.__setattr__(self, "rank_of", ranks)
        if self.n_real is None:
            object.__setattr__(self, "n_real", len(ranks))

    @property
    def n(self) -> int:
        return len(self.rank_of)

    def is_dummy(self, items) -> np.ndarray:
        return np.asarray(items) >= self.n_real

    def padded(self, top: int = 0, bottom: int = 0) -> "GroundTruth":
        if top < 0 or bottom < 0:
            raise InvalidParameter("padding must be non-negative")
        if top == 0 and bottom == 0:
            return self
        if self.n != self.n_real:
            raise InvalidParameter("universe is already padded")
        n = self.n
        ranks = np.concatenate(
            [
                self.rank_of + top,
                np.arange(1, top + 1),
                np.arange(n + top + 1, n + top + bottom + 1),
            ]
        )
        return GroundTruth(ranks, self.seed, n_real=n, n_top_dummies=top)


def make_ground_truth(n: int, seed: int) -> GroundTruth:
    """Uniformly random permutation of ranks over ``n`` items, fixed by ``seed``."""
    if n < 1:
        raise InvalidParameter(f"universe must be non-empty, got n={n}")
    rng = np.random.default_rng(seed & _MASK64)
    # Generator.permutation is a seeded Fisher-Yates shuffle
    return GroundTruth(rng.permutation(n) + 1, seed)


def true_sorted_topk(gt: GroundTruth, k: int) -> list[int]:
    """Real items of ranks 1..k in rank order (dummies never count)."""
    n = gt.n_real
    if not 1 <= k <= n:
        raise InvalidParameter(f"k must lie in [1, {n}], got {k}")
    real = gt.rank_of[:n]
    return [int(i) for i in np.argsort(real, kind="stable")[:k]]


@dataclass(frozen=True)
class ComparisonRequest:
    a: int
    b: int

    def __post_init__(self):
        if self.a == self.b:
            raise SelfComparison(f"item {self.a} compared with itself")


@dataclass(frozen=True)
class ComparisonOutcome:
    request: ComparisonRequest
    winner: int

    def __post_init__(self):
        if self.winner not in (self.request.a, self.request.b):
            raise InvalidParameter("winner must be one of the compared items")


@dataclass(frozen=True)
class NoiseCoordinates:
    run_seed: int
    round_index: int
    ordinal: int = field(default=0)


def compare(
    gt: GroundTruth,
    noise: NoiseModel,
    req: ComparisonRequest,
    coords: NoiseCoordinates,
) -> ComparisonOutcome:
    """One comparison: the truly better item wins iff its variate is below ``p``."""
    a, b = req.a, req.b
    if a == b:
        raise SelfComparison(f"item {a} compared with itself")
    for item in (a, b):
        if not 0 <= item < gt.n:
            raise InvalidParameter(f"item {item} outside the universe")
    better, worse = (a, b) if gt.rank_of[a] < gt.rank_of[b] else (b, a)
    if noise.is_noiseless:
        return ComparisonOutcome(req, better)
    u = uniforms(coords.run_seed, coords.round_index, [coords.ordinal])[0]
    return ComparisonOutcome(req, better if u < noise.p else worse)


@lru_cache(maxsize=512)
def _error_cdf(reps: int, p: float) -> np.ndarray:
    # P(number of wrong outcomes <= x) for x = 0..reps
    cdf = binom.cdf(np.arange(reps + 1), reps, 1.0 - p)
    cdf[-1] = 1.0
    cdf.setflags(write=False)
    return cdf


def wrong_counts(u: np.ndarray, reps: int, p: float) -> np.ndarray:
    """Binomial(reps, 1-p) count of wrong outcomes by inversion of one variate each.

    With ``reps == 1`` this is ``u >= p``, matching :func:`compare`.
    """
    if reps == 1:
        return (u >= p).astype(np.int64)
    return np.searchsorted(_error_cdf(reps, p), u, side="right").astype(np.int64)


def majority_wrong(u: np.ndarray, reps: int, p: float) -> np.ndarray:
    """True where more than half of ``reps`` outcomes are wrong.

    Equivalent to ``2 * wrong_counts(u, reps, p) > reps`` without the search.
    """
    if reps == 1:
        return u >= p
    return u >= _error_cdf(reps, p)[reps // 2]
