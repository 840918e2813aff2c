"""Noiseless sorted top-k: all-pairs, pivot partitioning, and round dispatch.

The bounded-round sort is randomized recursive pivot sorting; the one-round
quantile finder sorts a random sample exactly and reads off its order
statistics.  Both are practical stand-ins with the same round structure and
(for sorting) the same expected-cost exponent as the constructions they
replace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._numeric import ceil_real, floor_real
from .harness import Cross, RoundAlgorithm, Within, parallel
from .model import InvalidParameter

__all__ = [
    "ApproxPivotList",
    "InsufficientBudget",
    "NoiselessSortedTopK",
    "OneRoundSortedTopK",
    "PartitionInconsistency",
    "PivotPartition",
    "RRoundSort",
    "Rsorted1",
    "Rsorted2",
    "Rsorted2State",
    "alpha_for",
    "approx_quantile_pivots",
    "dispatch_branch",
    "noiseless_sorted_topk",
    "one_round_sorted_topk",
    "partition_by_pivots",
    "r_round_sort",
    "rsorted1",
    "rsorted2",
]

SMALL_SORT_CUTOFF = 4


class PartitionInconsistency(RuntimeError):
    """Pivot outcomes that no total order explains."""


class InsufficientBudget(ValueError):
    pass


def _check_k(n: int, k: int) -> None:
    if n < 1:
        raise InvalidParameter(f"n must be positive, got {n}")
    if not 1 <= k <= n:
        raise InvalidParameter(f"k must lie in [1, {n}], got {k}")


def _check_r(r: int, least: int) -> None:
    if r < least:
        raise InvalidParameter(f"r must be at least {least}, got {r}")


def alpha_for(n: int, k: int, r: int) -> int:
    """Pivot budget ``k^((r-1)/r) * n^((2-r)/r)``, rounded up."""
    return max(1, ceil_real(k ** ((r - 1) / r) * n ** ((2 - r) / r)))


def _order_by_wins(items: np.ndarray, wins: np.ndarray) -> np.ndarray:
    # most wins first, item id breaks ties
    return items[np.lexsort((items, -wins))]


# ---------------------------------------------------------------------------
# pivot partitions


@dataclass
class PivotPartition:
    pivots: np.ndarray  # best first
    pivot_ranks: np.ndarray  # ranks within the partitioned items
    chunks: list[np.ndarray]  # chunks[i - 1] is N_i; len(pivots) + 1 chunks
    l: int  # 1-based; len(pivots) + 1 means the sentinel

    def prefix(self, upto: int) -> list[np.ndarray]:
        return self.chunks[:upto]


def partition_by_pivots(items, pivots, pivot_beats, k: int | None = None) -> PivotPartition:
    """Split ``items`` into the chunks delimited by ``pivots``.

    ``pivot_beats[i, j]`` is True when ``pivots[j]`` beat ``items[i]``; the
    pivots must be among the items and every item must have met every pivot.
    ``l`` is the first pivot (1-based) whose rank is at least ``k``.
    """
    items = np.asarray(items, dtype=np.int64)
    pivots = np.asarray(pivots, dtype=np.int64)
    beats = np.asarray(pivot_beats, dtype=bool)
    n, t = len(items), len(pivots)
    if beats.shape != (n, t):
        raise ValueError("pivot_beats must have one row per item and one column per pivot")
    if t == 0:
        return PivotPartition(pivots, np.zeros(0, dtype=np.int64), [items.copy()], 1)

    sorter = np.argsort(items, kind="stable")
    pivot_rows = sorter[np.minimum(np.searchsorted(items, pivots, sorter=sorter), n - 1)]
    if not np.array_equal(items[pivot_rows], pivots):
        raise ValueError("every pivot must be among the items")
    if beats[pivot_rows, np.arange(t)].any():
        raise PartitionInconsistency("a pivot is recorded as beating itself")

    wins = beats.sum(axis=0)
    if len(np.unique(wins)) != t:
        raise PartitionInconsistency("two pivots have equal win counts")
    order = np.argsort(-wins, kind="stable")
    ranks = n - wins[order]
    ordered = beats[:, order]
    # every item must be beaten by a prefix of the sorted pivots
    if (ordered[:, 1:] & ~ordered[:, :-1]).any():
        raise PartitionInconsistency("an item's pivot outcomes are not a prefix")
    chunk_of = ordered.sum(axis=1)
    if not np.array_equal(chunk_of[pivot_rows[order]], np.arange(t)):
        raise PartitionInconsistency("pivot-vs-pivot outcomes disagree with win counts")

    is_pivot = np.zeros(n, dtype=bool)
    is_pivot[pivot_rows] = True
    chunks = [items[(chunk_of == c) & ~is_pivot] for c in range(t + 1)]
    l = t + 1
    if k is not None:
        hits = np.flatnonzero(ranks >= k)
        if len(hits):
            l = int(hits[0]) + 1
    return PivotPartition(pivots[order], ranks, chunks, l)


def _beats_matrix(items, pivots, within_res, cross_res, rest) -> tuple[np.ndarray, np.ndarray]:
    """Assemble pivot_beats for items = rest ++ pivots from a Within and a Cross result."""
    t = len(pivots)
    rows = np.concatenate([rest, pivots])
    mat = np.zeros((len(rows), t), dtype=bool)
    if len(rest):
        mat[: len(rest)] = cross_res.col_beats_row[0]
    if t:
        # within.beats[x, y]: pivot x beats pivot y; we need column = beater
        mat[len(rest) :] = within_res.beats.T
    return rows, mat


def _pivot_round(items: np.ndarray, pivots: np.ndarray):
    """Blocks comparing every item to every pivot without repeating a pair."""
    mask = np.zeros(int(items.max()) + 1, dtype=bool)
    mask[pivots] = True
    rest = items[~mask[items]]
    return rest, [Within(pivots), Cross(rest, pivots)]


def _stitch(part: PivotPartition, sorted_chunks: list, upto: int) -> list[int]:
    out: list[int] = []
    for i, chunk in enumerate(sorted_chunks[:upto]):
        out.extend(int(x) for x in chunk)
        if i < len(part.pivots):
            out.append(int(part.pivots[i]))
    return out


# ---------------------------------------------------------------------------
# sorting


def all_pairs_sort(items):
    """Generator: one round comparing every pair, ordered by win count."""
    items = np.asarray(items, dtype=np.int64)
    if len(items) <= 1:
        return [int(x) for x in items]
    (res,) = yield [Within(items)]
    return [int(x) for x in _order_by_wins(items, res.beat_counts)]


def r_round_sort_gen(items, r: int, rng: np.random.Generator):
    """Generator sorting ``items`` in at most ``r`` rounds."""
    items = np.asarray(items, dtype=np.int64)
    m = len(items)
    if m <= 1:
        return [int(x) for x in items]
    if r == 1 or m <= SMALL_SORT_CUTOFF:
        return (yield from all_pairs_sort(items))
    t = min(m - 1, ceil_real(m ** (1.0 / r)))
    pivots = np.sort(rng.choice(items, size=t, replace=False))
    rest, blocks = _pivot_round(items, pivots)
    within_res, cross_res = yield blocks
    rows, mat = _beats_matrix(items, pivots, within_res, cross_res, rest)
    part = partition_by_pivots(rows, pivots, mat)
    sorted_chunks = yield from parallel(r_round_sort_gen(c, r - 1, rng) for c in part.chunks)
    return _stitch(part, sorted_chunks, len(sorted_chunks))


class _Seeded(RoundAlgorithm):
    def __init__(self, seed: int = 0):
        self.seed = seed

    @cached_property
    def rng(self) -> np.random.Generator:
        # built on first draw; generator construction dominates tiny runs
        return np.random.default_rng(self.seed)


class RRoundSort(_Seeded):
    task = "sort"

    def __init__(self, n: int, r: int, seed: int = 0):
        _check_k(n, n)
        _check_r(r, 1)
        super().__init__(seed)
        self.n, self.k, self.r, self.max_rounds = n, n, r, r

    def run(self):
        return (yield from r_round_sort_gen(np.arange(self.n), self.r, self.rng))


def r_round_sort(n: int, r: int, seed: int = 0) -> RRoundSort:
    return RRoundSort(n, r, seed)


# ---------------------------------------------------------------------------
# sorted top-k


class OneRoundSortedTopK(RoundAlgorithm):
    def __init__(self, n: int, k: int, seed: int = 0):
        _check_k(n, k)
        self.n, self.k, self.max_rounds, self.seed = n, k, 1, seed

    def run(self):
        order = yield from all_pairs_sort(np.arange(self.n))
        return order[: self.k]


def one_round_sorted_topk(n: int, k: int, seed: int = 0) -> OneRoundSortedTopK:
    return OneRoundSortedTopK(n, k, seed)


def rsorted1_gen(items, k: int, r: int, rng: np.random.Generator, trace: dict | None = None):
    """Generator: random pivots in round 1, chunk sorts in rounds 2..r."""
    items = np.asarray(items, dtype=np.int64)
    n = len(items)
    if n == 1:
        return [int(items[0])]
    alpha = alpha_for(n, k, r)
    # drawn with repetition, compared once
    pivots = np.unique(rng.choice(items, size=alpha, replace=True))
    rest, blocks = _pivot_round(items, pivots)
    within_res, cross_res = yield blocks
    rows, mat = _beats_matrix(items, pivots, within_res, cross_res, rest)
    part = partition_by_pivots(rows, pivots, mat, k)
    if trace is not None:
        trace.update(alpha=alpha, partition=part)
    needed = part.chunks[: part.l]
    sorted_chunks = yield from parallel(r_round_sort_gen(c, r - 1, rng) for c in needed)
    return _stitch(part, sorted_chunks, part.l)[:k]


class Rsorted1(_Seeded):
    def __init__(self, n: int, k: int, r: int, seed: int = 0):
        _check_k(n, k)
        _check_r(r, 2)
        super().__init__(seed)
        self.n, self.k, self.r, self.max_rounds = n, k, r, r
        self.alpha = alpha_for(n, k, r)
        self.trace: dict = {}

    def run(self):
        return (yield from rsorted1_gen(np.arange(self.n), self.k, self.r, self.rng, self.trace))


def rsorted1(n: int, k: int, r: int, seed: int = 0) -> Rsorted1:
    return Rsorted1(n, k, r, seed)


@dataclass
class ApproxPivotList:
    targets: np.ndarray
    pivots: np.ndarray
    tolerance: int
    sample_size: int


def quantile_tolerance(n: int, t: int) -> int:
    return math.ceil(3 * n * math.sqrt(math.log(n) / t)) if n > 1 else 0


def approx_quantile_gen(items, targets, budget: int, rng: np.random.Generator):
    """Generator: one round sorting a random sample; pivots are its order statistics."""
    items = np.asarray(items, dtype=np.int64)
    n = len(items)
    if budget < n:
        raise InsufficientBudget(f"budget {budget} is below n={n}")
    targets = np.asarray(targets, dtype=np.float64)
    t = min(n, math.isqrt(budget))
    sample = rng.choice(items, size=t, replace=False)
    order = np.array((yield from all_pairs_sort(sample)), dtype=np.int64)
    idx = np.clip(np.floor(targets * t / n + 0.5).astype(np.int64), 1, t)
    return ApproxPivotList(targets, order[idx - 1], quantile_tolerance(n, t), t)


class _QuantileAlgorithm(_Seeded):
    task = "quantiles"

    def __init__(self, n: int, alpha: int, target_ranks, budget: int, seed: int = 0):
        if budget < n:
            raise InsufficientBudget(f"budget {budget} is below n={n}")
        super().__init__(seed)
        self.n, self.alpha, self.max_rounds = n, alpha, 1
        self.targets = np.asarray(target_ranks, dtype=np.float64)
        self.budget_hint = budget

    def run(self):
        return (yield from approx_quantile_gen(np.arange(self.n), self.targets, self.budget_hint, self.rng))


def approx_quantile_pivots(n: int, alpha: int, target_ranks, budget: int, seed: int = 0):
    return _QuantileAlgorithm(n, alpha, target_ranks, budget, seed)


@dataclass
class Rsorted2State:
    S: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    s: int | None = None
    N_prime: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fail: bool = False
    fail_reason: str = ""
    quantiles: ApproxPivotList | None = None
    partition: PivotPartition | None = None


def _probe_gen(items, probes):
    rest, blocks = _pivot_round(items, probes)
    within_res, cross_res = yield blocks
    return _beats_matrix(items, probes, within_res, cross_res, rest)


def rsorted2_gen(items, k: int, r: int, rng: np.random.Generator, state: Rsorted2State | None = None):
    """Generator: probe set and quantile pivots, then a pivot round, then chunk sorts."""
    items = np.asarray(items, dtype=np.int64)
    n = len(items)
    state = state if state is not None else Rsorted2State()
    if n == 1:
        return [int(items[0])]
    alpha = alpha_for(n, k, r)
    log_n = math.log(n)
    probes = np.unique(rng.choice(items, size=max(1, ceil_real(alpha * log_n)), replace=True))
    targets = np.arange(1, alpha * alpha + 2) * (k / alpha**2)
    budget = max(n, ceil_real(alpha * n * log_n))
    state.S = probes
    (rows, mat), quant = yield from parallel(
        [_probe_gen(items, probes), approx_quantile_gen(items, targets, budget, rng)]
    )
    state.quantiles = quant
    d = quant.tolerance

    # probe ranks from round 1; pick the best-ranked probe in the window that still covers top-k
    probe_ranks = n - mat.sum(axis=0)
    lo, hi = max(ceil_real(2 * n / alpha), k + 1), floor_real(3 * n / alpha)
    ok = np.flatnonzero((probe_ranks >= lo) & (probe_ranks <= hi))
    if len(ok) == 0:
        state.fail, state.fail_reason = True, "no probe ranks inside the window"
        return (yield from _fallback(items, k))
    j = ok[np.argmin(probe_ranks[ok])]
    s = int(probes[j])
    n_prime = np.sort(rows[~mat[:, j] & (rows != s)])
    state.s, state.N_prime = s, n_prime

    pivots = np.unique(quant.pivots)
    (res,) = yield [Cross(n_prime, pivots)]
    beaten_by = res.row_beats_col[0]  # [x, p]: N' item x beats pivot p
    measured = 1 + beaten_by.sum(axis=0)
    measured_of = dict(zip(pivots.tolist(), measured.tolist()))
    dev = np.abs(np.array([measured_of[int(p)] for p in quant.pivots]) - quant.targets)
    if (dev > d).any():
        state.fail, state.fail_reason = True, "a quantile pivot deviates beyond the tolerance"
        return (yield from _fallback(items, k))

    inside = np.isin(pivots, n_prime)
    pivot_beats = res.col_beats_row[0][:, inside]
    part = partition_by_pivots(n_prime, pivots[inside], pivot_beats, k)
    state.partition = part
    needed = part.chunks[: part.l]
    sorted_chunks = yield from parallel(r_round_sort_gen(c, r - 2, rng) for c in needed)
    return _stitch(part, sorted_chunks, part.l)[:k]


def _fallback(items, k):
    order = yield from all_pairs_sort(items)
    return order[:k]


class Rsorted2(_Seeded):
    def __init__(self, n: int, k: int, r: int, seed: int = 0):
        _check_k(n, k)
        _check_r(r, 3)
        super().__init__(seed)
        self.n, self.k, self.r, self.max_rounds = n, k, r, r
        self.alpha = alpha_for(n, k, r)
        self.state = Rsorted2State()

    def run(self):
        return (yield from rsorted2_gen(np.arange(self.n), self.k, self.r, self.rng, self.state))


def rsorted2(n: int, k: int, r: int, seed: int = 0) -> Rsorted2:
    return Rsorted2(n, k, r, seed)


# ---------------------------------------------------------------------------
# dispatch


def dispatch_branch(n: int, k: int, r: int) -> tuple[str, int]:
    """Which sub-algorithm the dispatcher runs, and with which (possibly raised) k."""
    _check_k(n, k)
    _check_r(r, 1)
    if r == 1:
        return "all_pairs", k
    if r == 2:
        cut = min(n, ceil_real(n ** (2 / 3)))
        return ("rsorted1", k) if k > n ** (2 / 3) else ("rsorted1", max(k, cut))
    hi = n ** ((2 * r - 2) / (2 * r - 1))
    lo = min(n, ceil_real(10 * n ** ((r - 2) / (r - 1))))
    if k > hi:
        return "rsorted1", k
    if k >= lo:
        return "rsorted2", k
    return "rsorted2", lo


def noiseless_sorted_gen(items, k: int, r: int, rng: np.random.Generator):
    items = np.asarray(items, dtype=np.int64)
    branch, inner_k = dispatch_branch(len(items), k, r)
    if branch == "all_pairs":
        order = yield from all_pairs_sort(items)
    elif branch == "rsorted1":
        order = yield from rsorted1_gen(items, inner_k, r, rng)
    else:
        order = yield from rsorted2_gen(items, inner_k, r, rng)
    return order[:k]


class NoiselessSortedTopK(_Seeded):
    def __init__(self, n: int, k: int, r: int, seed: int = 0):
        super().__init__(seed)
        self.branch, self.inner_k = dispatch_branch(n, k, r)
        self.n, self.k, self.r, self.max_rounds = n, k, r, r

    def run(self):
        return (yield from noiseless_sorted_gen(np.arange(self.n), self.k, self.r, self.rng))


def noiseless_sorted_topk(n: int, k: int, r: int, seed: int = 0) -> NoiselessSortedTopK:
    return NoiselessSortedTopK(n, k, r, seed)
