"""Top-1, top-k and sorted top-k under noisy comparisons.

Every algorithm here issues all comparisons of a round up front.  Repetition
counts come from :class:`AlgoConstants` and are always odd, so a majority
verdict exists for every compared pair.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._numeric import ceil_real, floor_real, int_root_ceil, odd_ceil
from .harness import Cross, Final, RoundAlgorithm, Within, lift_block, lower_results, parallel
from .model import InvalidParameter
from .noiseless import NoiselessSortedTopK
from .noiseless import _Seeded as _SeededBase

__all__ = [
    "AlgoConstants",
    "FindMax",
    "KL_HALF_THIRD",
    "LevelLadder",
    "OneRoundSortedTopKNoisy",
    "OneRoundTopK",
    "PlacementState",
    "RepeatLift",
    "TrimState",
    "TwoRoundSortedTopKNoisy",
    "TwoRoundTopK",
    "find_max",
    "level_ladder",
    "lift_reps",
    "majority",
    "one_round_sorted_topk_noisy",
    "one_round_sorted_topk_noisy_comparisons",
    "one_round_topk",
    "one_round_topk_comparisons",
    "one_round_topk_static_bound",
    "place_by_walk",
    "plurality",
    "repeat_lift",
    "trim_step",
    "two_round_sorted_topk_noisy",
    "two_round_topk",
]

# KL divergence (nats) between Bernoulli(1/2) and Bernoulli(1/3)
KL_HALF_THIRD = 0.5 * math.log(1.5) + 0.5 * math.log(0.75)


@dataclass(frozen=True)
class AlgoConstants:
    c: float = 864.0
    c1: float = 2304.0
    c2: float = 864.0
    c0: float | None = None
    constant_scale: float = 1.0

    def __post_init__(self):
        if self.c0 is None:
            object.__setattr__(self, "c0", self.c1 + 20000 * self.c2 + 1)
        for name in ("c", "c1", "c2", "c0", "constant_scale"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive")

    def reps(self, x: float) -> int:
        """Scaled repetition count, rounded up to an odd integer."""
        return odd_ceil(x * self.constant_scale)


def majority(winners) -> int:
    """Item that won strictly more than half of an odd number of outcomes."""
    counts = Counter(int(w) for w in winners)
    total = sum(counts.values())
    if total % 2 == 0:
        raise InvalidParameter("majority needs an odd number of outcomes")
    if len(counts) > 2:
        raise InvalidParameter("outcomes name more than two items")
    return counts.most_common(1)[0][0]


def plurality(answers):
    """Most frequent answer; ties go to the answer seen first."""
    keyed = [tuple(sorted(int(x) for x in a)) for a in answers]
    return list(Counter(keyed).most_common(1)[0][0])


# ---------------------------------------------------------------------------
# find max


def _find_max_depths(s: int) -> int:
    depth = s.bit_length() - 1
    if s < 1 or 1 << depth != s:
        raise InvalidParameter(f"find_max needs a power-of-two item count, got {s}")
    return depth


def find_max_gen(items, delta: float, consts: AlgoConstants):
    """Generator: knockout tree whose every level is compared in the same round."""
    items = np.asarray(items, dtype=np.int64)
    if not 0 < delta <= 1 / 9:
        raise InvalidParameter(f"delta must lie in (0, 1/9], got {delta}")
    s = len(items)
    depths = _find_max_depths(s)
    if depths == 0:
        return int(items[0])
    blocks = []
    for d in range(depths):
        halves = items.reshape(1 << d, 2, s >> (d + 1))
        reps = consts.reps(100 * math.log(3**d / delta))
        blocks.append(Cross(halves[:, 0], halves[:, 1], reps))
    results = yield blocks

    winners = np.arange(s)  # positions of the winners at the current depth
    for d in range(depths - 1, -1, -1):
        width = s >> d
        half = width // 2
        nodes = np.arange(1 << d)
        left, right = winners[0::2], winners[1::2]
        row = left - nodes * width
        col = right - nodes * width - half
        left_wins = results[d].row_beats_col_at(nodes, row, col)
        winners = np.where(left_wins, left, right)
    return int(items[winners[0]])


class FindMax(RoundAlgorithm):
    def __init__(self, n: int, delta: float = 1 / 9, constants: AlgoConstants | None = None, seed: int = 0):
        if n < 1:
            raise InvalidParameter("n must be positive")
        if not 0 < delta <= 1 / 9:
            raise InvalidParameter(f"delta must lie in (0, 1/9], got {delta}")
        self.n, self.k, self.delta, self.seed = n, 1, delta, seed
        self.constants = constants or AlgoConstants()
        self.size = 1 << (n - 1).bit_length()
        self.padding = (0, self.size - n)

    def run(self):
        return [(yield from find_max_gen(np.arange(self.size), self.delta, self.constants))]


def find_max(n: int, delta: float = 1 / 9, constants: AlgoConstants | None = None, seed: int = 0) -> FindMax:
    return FindMax(n, delta, constants, seed)


# ---------------------------------------------------------------------------
# level ladder and the trim cascade


@dataclass(frozen=True)
class LevelLadder:
    levels: tuple[float, ...]

    @property
    def log_star(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, i: int) -> float:
        return self.levels[i]


def level_ladder(n: int) -> LevelLadder:
    """``l_0 = n``, then repeated base-2 logarithms floored at 1, stopping at the first 1."""
    if n < 1:
        raise InvalidParameter("n must be positive")
    levels = [float(n)]
    while levels[-1] > 1:
        levels.append(max(math.log2(levels[-1]), 1.0))
    return LevelLadder(tuple(levels))


@dataclass
class TrimState:
    N: np.ndarray
    T: np.ndarray
    k: int
    level: int = 0
    pivots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    r: dict = field(default_factory=dict)
    a: int | None = None
    b: int | None = None
    A: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    B: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rejected: list = field(default_factory=list)

    @classmethod
    def start(cls, items, k: int, accepted=()) -> "TrimState":
        return cls(np.unique(np.asarray(items, dtype=np.int64)), np.unique(np.asarray(accepted, dtype=np.int64)), k)


def _pick(candidates: np.ndarray, distance: np.ndarray) -> int | None:
    if len(candidates) == 0:
        return None
    order = np.lexsort((candidates, distance))
    return int(candidates[order[0]])


def trim_step(state: TrimState, pivots, pivot_beats) -> TrimState:
    """One level of the trim cascade.

    ``pivot_beats(items, pivots)`` returns a bool matrix, True where the pivot
    won the majority against the item; a pivot never beats itself.  How pairs
    that were never compared read is up to ``pivot_beats``.
    """
    N = state.N
    live = np.intersect1d(np.asarray(pivots, dtype=np.int64), N)
    k = state.k
    if len(live) == 0:
        return TrimState(N, state.T, k, state.level + 1, live, {}, None, None,
                         live[:0], live[:0], state.rejected + [live[:0]])
    V = np.asarray(pivot_beats(N, live), dtype=bool)
    r = (~V).sum(axis=0)
    below = r <= k
    a = _pick(live[below], k - r[below])
    b = _pick(live[~below], r[~below] - k)
    A = N[~V[:, np.searchsorted(live, a)]] if a is not None else N[:0]
    if b is not None:
        B = np.union1d(N[V[:, np.searchsorted(live, b)]], [b])
        B = np.setdiff1d(B, A, assume_unique=True)
    else:
        B = N[:0]
    gone = np.union1d(A, B)
    return TrimState(
        np.setdiff1d(N, gone, assume_unique=True),
        np.union1d(state.T, A),
        k - len(A),
        state.level + 1,
        live,
        dict(zip(live.tolist(), r.tolist())),
        a,
        b,
        A,
        B,
        state.rejected + [B],
    )


def _trim_dense(N, T, k, ids, pos, V):
    """Batched :func:`trim_step` over stacked instances, in place on masks.

    ``N``, ``T``: (B, m) masks over ``ids``; ``pos``: (B, s) pivot positions;
    ``V[b, x, j]``: pivot ``j`` beat item ``x``.
    """
    nb = N.shape[0]
    rows = np.arange(nb)
    live = N[rows[:, None], pos]
    r = (N[:, :, None] & ~V).sum(axis=1)
    pid = ids[rows[:, None], pos]
    scale = np.int64(ids.max() + 1)
    inf = np.iinfo(np.int64).max
    kk = k[:, None]
    key_a = np.where(live & (r <= kk), (kk - r) * scale + pid, inf)
    key_b = np.where(live & (r > kk), (r - kk) * scale + pid, inf)
    ja, jb = key_a.argmin(axis=1), key_b.argmin(axis=1)
    has_a = key_a[rows, ja] < inf
    has_b = key_b[rows, jb] < inf
    A = N & ~V[rows, :, ja] & has_a[:, None]
    B = N & V[rows, :, jb]
    B[rows, pos[rows, jb]] = True
    B &= has_b[:, None] & ~A
    T |= A
    N &= ~(A | B)
    k -= A.sum(axis=1)
    return B


def _sample_positions(rng, nb: int, m: int, size: int) -> np.ndarray:
    if size >= m:
        return np.broadcast_to(np.arange(m), (nb, m)).copy()
    return np.sort(rng.random((nb, m)).argsort(axis=1)[:, :size], axis=1)


def one_round_topk_gen(groups, k, consts: AlgoConstants, rng: np.random.Generator, trace: dict | None = None):
    """Generator: stacked one-round top-k over the rows of ``groups``.

    Returns one sorted item array per row.
    """
    groups = np.asarray(groups, dtype=np.int64)
    if groups.ndim == 1:
        groups = groups[None, :]
    nb, m = groups.shape
    ladder = level_ladder(m)
    levels = []
    for i in range(1, ladder.log_star + 1):
        size = min(m, max(1, ceil_real(m / ladder[i] ** 2)))
        pos = _sample_positions(rng, nb, m, size)
        reps = consts.reps(consts.c * ladder[i])
        levels.append((pos, Cross(groups, np.take_along_axis(groups, pos, axis=1), reps)))
    results = yield [block for _, block in levels]
    if k >= m:
        return [row.copy() for row in np.sort(groups, axis=1)]

    N = np.ones((nb, m), dtype=bool)
    T = np.zeros((nb, m), dtype=bool)
    kk = np.full(nb, k, dtype=np.int64)
    rejected = []
    for (pos, _), res in zip(levels, results):
        rejected.append(_trim_dense(N, T, kk, groups, pos, res.col_beats_row))
    if trace is not None:
        trace.update(remaining=N.copy(), rejected=rejected, k_left=kk.copy(), accepted=T.copy())
    return [np.sort(groups[b][T[b]]) for b in range(nb)]


def _check_k(n: int, k: int) -> None:
    if n < 1:
        raise InvalidParameter(f"n must be positive, got {n}")
    if not 1 <= k <= n:
        raise InvalidParameter(f"k must lie in [1, {n}], got {k}")


class _Seeded(_SeededBase):
    def __init__(self, seed: int, constants: AlgoConstants | None):
        super().__init__(seed)
        self.constants = constants or AlgoConstants()


class OneRoundTopK(_Seeded):
    task = "topk"

    def __init__(self, n: int, k: int, constants: AlgoConstants | None = None, seed: int = 0):
        _check_k(n, k)
        super().__init__(seed, constants)
        self.n, self.k = n, k
        self.trace: dict = {}

    def run(self):
        (out,) = yield from one_round_topk_gen(np.arange(self.n), self.k, self.constants, self.rng, self.trace)
        return [int(x) for x in out]


def one_round_topk(n: int, k: int, constants: AlgoConstants | None = None, seed: int = 0) -> OneRoundTopK:
    return OneRoundTopK(n, k, constants, seed)


def one_round_topk_comparisons(n: int, consts: AlgoConstants | None = None) -> int:
    """Closed-form comparison count of :func:`one_round_topk` on ``n`` items."""
    consts = consts or AlgoConstants()
    ladder = level_ladder(n)
    total = 0
    for i in range(1, ladder.log_star + 1):
        size = min(n, max(1, ceil_real(n / ladder[i] ** 2)))
        total += consts.reps(consts.c * ladder[i]) * (n * size - size)
    return total


def one_round_topk_static_bound(n: int, consts: AlgoConstants | None = None) -> float:
    """``c * n^2 * (1 + sum_i 1 / l_i)`` over levels i >= 1, scaled; a ceiling on the batch size."""
    consts = consts or AlgoConstants()
    ladder = level_ladder(n)
    tail = sum(1 / ladder[i] for i in range(1, ladder.log_star + 1))
    return consts.c * consts.constant_scale * n * n * (1 + tail)


# ---------------------------------------------------------------------------
# two-round top-k


def place_by_walk(x_row) -> int:
    """Index maximizing the prefix sum of ``x_row`` (empty prefix = 0), smallest on ties."""
    x = np.asarray(x_row, dtype=np.int64)
    return int(np.argmax(np.concatenate([[0], np.cumsum(x)])))


def _walk_rows(X: np.ndarray) -> np.ndarray:
    prefix = np.concatenate([np.zeros((len(X), 1), dtype=np.int64), np.cumsum(X, axis=1)], axis=1)
    return prefix.argmax(axis=1)


@dataclass
class PlacementState:
    S: np.ndarray  # pivots, best first
    p: np.ndarray  # placement index per universe item
    sizes: np.ndarray  # |P_j| for j = 0..|S|
    m: int

    def members(self, lo: int, hi: int) -> np.ndarray:
        return np.flatnonzero((self.p >= lo) & (self.p <= hi))


def boundary_index(sizes, k: int) -> int:
    """Smallest J with |P_0| + ... + |P_J| >= k."""
    return int(np.searchsorted(np.cumsum(sizes), k, side="left"))


def topk_padding(n: int, k: int) -> int:
    pad = ceil_real(40 * math.log(n) * n ** (2 / 3)) if n > 1 else 0
    return pad if min(k, n - k) < pad else 0


class TwoRoundTopK(_Seeded):
    task = "topk"
    max_rounds = 2

    def __init__(self, n: int, k: int, constants: AlgoConstants | None = None, seed: int = 0):
        _check_k(n, k)
        super().__init__(seed, constants)
        self.n, self.k = n, k
        pad = topk_padding(n, k)
        self.padding = (pad, pad)
        self.n_pad = n + 2 * pad
        self.k_pad = k + pad
        c = self.constants
        self.budget = floor_real(c.c0 * c.constant_scale * self.n_pad ** (4 / 3))
        self.placement: PlacementState | None = None
        self.cascade: list[TrimState] = []
        self._accepted = np.zeros(0, dtype=np.int64)

    def _real(self, items) -> list[int]:
        return [int(x) for x in np.sort(items) if x < self.n]

    def finalize_on_halt(self):
        out = self._real(self._accepted)[: self.k]
        fill = [x for x in range(self.n) if x not in set(out)]
        return sorted(out + fill[: self.k - len(out)])

    def run(self):
        c, rng, n = self.constants, self.rng, self.n_pad
        if n == 1:
            return [0]
        items = np.arange(n)
        t = min(n, ceil_real(n ** (1 / 3)))
        S = np.sort(rng.choice(n, size=t, replace=False))
        cross, within = yield [
            Cross(items, S, c.reps(c.c1)),
            Within(S, c.reps(100 * math.log(n))),
        ]
        order = np.lexsort((S, -within.beat_counts))
        S = S[order]
        X = np.where(cross.col_beats_row[0][:, order], 1, -1)
        p = _walk_rows(X)
        p[S] = np.arange(1, t + 1)
        sizes = np.bincount(p, minlength=t + 1)
        m = boundary_index(sizes, self.k_pad)
        self.placement = PlacementState(S, p, sizes, m)

        ladder = level_ladder(n)
        windows, blocks = [], []
        for i in range(1, ladder.log_star + 1):
            w = floor_real(ladder[i])
            W = self.placement.members(max(0, m - w), min(t, m + w))
            size = min(len(W), max(1, ceil_real(len(W) / ladder[i] ** 4)))
            Si = np.sort(rng.choice(W, size=size, replace=False))
            windows.append((W, Si, max(0, m - w), min(t, m + w)))
            blocks.append(Cross(W, Si, c.reps(c.c2 * ladder[i])))
        lo1 = max(0, m - floor_real(ladder[1]))
        head = np.flatnonzero(p < lo1)
        self._accepted = head
        results = yield blocks

        state = TrimState.start(windows[0][0], self.k_pad - len(head), head)
        self.cascade = [state]
        for (W, Si, lo, hi), res in zip(windows, results):
            state = trim_step(state, Si, _window_verdicts(W, Si, res, p, lo, hi))
            self.cascade.append(state)
            self._accepted = state.T
        return self._real(state.T)


def _window_verdicts(W, Si, res, p, lo: int, hi: int):
    """Verdicts for one level; pairs outside the window fall back to the placement.

    An item placed above the window counts as beating every pivot of the level
    and one placed below it as beaten by every pivot.
    """

    def beats(items, pivots):
        rows = np.searchsorted(W, items)
        inside = (rows < len(W)) & (W[np.minimum(rows, len(W) - 1)] == items)
        cols = np.searchsorted(Si, pivots)
        out = np.zeros((len(items), len(pivots)), dtype=bool)
        out[p[items] > hi] = True
        if inside.any():
            out[inside] = res.col_beats_row_at(0, rows[inside][:, None], cols[None, :])
        return out

    return beats


def two_round_topk(n: int, k: int, constants: AlgoConstants | None = None, seed: int = 0) -> TwoRoundTopK:
    return TwoRoundTopK(n, k, constants, seed)


# ---------------------------------------------------------------------------
# sorted top-k


def one_round_sorted_topk_noisy_gen(items, k: int, consts: AlgoConstants, rng, trace: dict | None = None):
    items = np.asarray(items, dtype=np.int64)
    m = len(items)
    if m == 0:
        return []
    if k == 1 and m == 1:
        return [int(items[0])]
    if k == 1:
        return [(yield from find_max_gen(items, 1 / 9, consts))]
    copies = one_round_topk_gen(np.broadcast_to(items, (3, m)), k, consts, rng)
    reps = consts.reps(100 * (math.log(k) + 1))

    def pairs():
        (res,) = yield [Within(items, reps)]
        return res

    answers, res = yield from parallel([copies, pairs()])
    chosen = np.array(plurality(answers), dtype=np.int64)
    if trace is not None:
        trace.update(answers=answers, chosen=chosen)
    where = np.searchsorted(np.sort(items), chosen)
    sorter = np.argsort(items)
    idx = sorter[where]
    wins = res.beats[np.ix_(idx, idx)].sum(axis=1)
    return [int(x) for x in chosen[np.lexsort((chosen, -wins))]]


class OneRoundSortedTopKNoisy(_Seeded):
    def __init__(self, n: int, k: int, constants: AlgoConstants | None = None, seed: int = 0):
        _check_k(n, k)
        super().__init__(seed, constants)
        self.n, self.k = n, k
        self.trace: dict = {}
        self.size = n
        if k == 1:
            self.size = 1 << (n - 1).bit_length()
            self.padding = (0, self.size - n)

    def run(self):
        return (yield from one_round_sorted_topk_noisy_gen(
            np.arange(self.size), self.k, self.constants, self.rng, self.trace))


def one_round_sorted_topk_noisy(n: int, k: int, constants: AlgoConstants | None = None, seed: int = 0):
    return OneRoundSortedTopKNoisy(n, k, constants, seed)


def one_round_sorted_topk_noisy_comparisons(n: int, k: int, consts: AlgoConstants | None = None) -> int:
    consts = consts or AlgoConstants()
    return 3 * one_round_topk_comparisons(n, consts) + consts.reps(100 * (math.log(k) + 1)) * (n * (n - 1) // 2)


def lift_reps(n: int, consts: AlgoConstants | None = None) -> int:
    """Repetitions that push a pair's majority error below 1 / (12 n^2) at p = 2/3."""
    consts = consts or AlgoConstants()
    return consts.reps(math.log(12 * n * n) / KL_HALF_THIRD)


class RepeatLift(RoundAlgorithm):
    """Runs ``inner`` with every request repeated ``reps`` times; it sees majorities."""

    def __init__(self, inner: RoundAlgorithm, reps: int):
        if reps < 1 or reps % 2 == 0:
            raise InvalidParameter(f"reps must be a positive odd number, got {reps}")
        self.inner, self.reps = inner, reps
        self.n, self.k, self.task = inner.n, inner.k, inner.task
        self.max_rounds, self.padding = inner.max_rounds, inner.padding

    def run(self):
        step = self.inner.next_batch(None)
        while not isinstance(step, Final):
            outer = yield [lift_block(b, self.reps) for b in step]
            step = self.inner.next_batch(lower_results(step, outer, self.reps))
        return step.output


def repeat_lift(inner: RoundAlgorithm, reps: int) -> RepeatLift:
    return RepeatLift(inner, reps)


class TwoRoundSortedTopKNoisy(_Seeded):
    max_rounds = 2

    def __init__(
        self,
        n: int,
        k: int,
        constants: AlgoConstants | None = None,
        seed: int = 0,
        small_k_threshold: float | None = None,
        group_top1: str = "one_round_topk",
    ):
        _check_k(n, k)
        if k < 2:
            raise InvalidParameter("two-round sorted top-k needs k >= 2")
        if group_top1 not in ("one_round_topk", "find_max"):
            raise InvalidParameter(f"unknown group top-1 routine {group_top1!r}")
        super().__init__(seed, constants)
        self.n, self.k = n, k
        self.threshold = n**0.1 if small_k_threshold is None else small_k_threshold
        self.small_k = k < self.threshold
        self.group_top1 = group_top1
        self.trace: dict = {}
        if self.small_k:
            c = self.side = int_root_ceil(n, 3)
            # find_max wants power-of-two groups; the extra dummies fill them
            self.group_size = 1 << (c - 1).bit_length() if group_top1 == "find_max" else c
            self.padding = (0, c**3 - n + c * c * (self.group_size - c))
            self.copies = self.constants.reps(200 * math.log(k))
        else:
            self.lift = RepeatLift(NoiselessSortedTopK(n, k, 2, seed), lift_reps(n, self.constants))

    def run(self):
        if not self.small_k:
            return (yield from self.lift.run())
        c, copies = self.side, self.copies
        groups = self.rng.permutation(c**3).reshape(c * c, c)
        if self.group_top1 == "find_max":
            fill = c**3 + np.arange(c * c * (self.group_size - c)).reshape(c * c, -1)
            groups = np.concatenate([groups, fill], axis=1)
        stacked = np.repeat(groups, copies, axis=0)
        if self.group_top1 == "find_max":
            outs = yield from parallel(_find_max_answer(row, self.constants) for row in stacked)
        else:
            outs = yield from one_round_topk_gen(stacked, 1, self.constants, self.rng)
        T = np.unique(np.concatenate(
            [plurality(outs[g * copies : (g + 1) * copies]) for g in range(c * c)]
        ).astype(np.int64))
        self.trace.update(groups=groups, T=T)
        k_eff = min(self.k, len(T))
        if len(T) == 0:
            return []
        out = yield from one_round_sorted_topk_noisy_gen(T, k_eff, self.constants, self.rng)
        return [x for x in out if x < self.n]


def _find_max_answer(items, consts):
    return [(yield from find_max_gen(items, 1 / 9, consts))]


def two_round_sorted_topk_noisy(n: int, k: int, constants: AlgoConstants | None = None, seed: int = 0, **kw):
    return TwoRoundSortedTopKNoisy(n, k, constants, seed, **kw)
