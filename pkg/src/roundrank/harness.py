"""Round-batched execution of comparison algorithms.

An algorithm issues one batch of comparison requests per round and sees the
outcomes only after the whole batch has been evaluated.  Batches are lists of
blocks, each a compact description of many requests:

``Cross``   every (row, column) pair of two item arrays, optionally stacked
            along a leading instance axis; cells where both sides hold the
            same item are void (never compared, never counted).
``Within``  every unordered pair of an item array, in ``np.triu_indices`` order.
``Pairs``   explicit request pairs.

Each cell is one request repeated ``reps`` times.  Requests are numbered by
ordinal within their round (void cells consume an ordinal), and the win count
of a cell is drawn from the variate at ``(run_seed, round_index, ordinal)``.
Results are evaluated lazily; only cells an algorithm reads are drawn.

Algorithms are written as generators: ``results = yield [block, ...]`` and a
final ``return output``.  :func:`parallel` runs several such generators in
lockstep so that logically parallel sub-problems share rounds.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Callable, Generator, Iterable, Sequence

import numpy as np

from .model import GroundTruth, NoiseModel, SelfComparison, majority_wrong, uniforms, wrong_counts

__all__ = [
    "Cross",
    "Final",
    "Pairs",
    "RejectedBatch",
    "RoundAlgorithm",
    "RoundBatch",
    "RoundLimitExceeded",
    "RunStats",
    "Within",
    "audit_adaptiveness",
    "early_outcome",
    "execute",
    "lift_block",
    "lower_results",
    "parallel",
]


class RoundLimitExceeded(RuntimeError):
    pass


class RejectedBatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# blocks


def _as_items(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.int64))


def _rows_unique(x: np.ndarray) -> bool:
    if x.shape[1] < 2:
        return True
    if x.shape[0] == 1 and x.shape[1] <= 64:
        return len(set(x[0].tolist())) == x.shape[1]
    s = np.sort(x, axis=1)
    return not bool(np.any(s[:, 1:] == s[:, :-1]))


@dataclass(frozen=True, eq=False)
class Cross:
    left: np.ndarray
    right: np.ndarray
    reps: int = 1

    def __post_init__(self):
        left, right = _as_items(self.left), _as_items(self.right)
        if left.ndim == 1:
            left = left[None, :]
        if right.ndim == 1:
            right = right[None, :]
        if left.shape[0] != right.shape[0]:
            raise RejectedBatch("cross block sides disagree on instance count")
        if self.reps < 1:
            raise RejectedBatch("reps must be positive")
        if not (_rows_unique(left) and _rows_unique(right)):
            raise RejectedBatch("cross block sides must not repeat items")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def cells(self) -> int:
        b, r = self.left.shape
        return b * r * self.right.shape[1]

    @cached_property
    def void_cells(self) -> int:
        both = np.sort(np.concatenate([self.left, self.right], axis=1), axis=1)
        return int(np.count_nonzero(both[:, 1:] == both[:, :-1]))

    @property
    def comparisons(self) -> int:
        return self.reps * (self.cells - self.void_cells)

    def same_as(self, other) -> bool:
        return (
            isinstance(other, Cross)
            and self.reps == other.reps
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
        )


@dataclass(frozen=True, eq=False)
class Within:
    items: np.ndarray
    reps: int = 1

    def __post_init__(self):
        items = _as_items(self.items)
        if items.ndim != 1:
            raise RejectedBatch("within block takes a flat item array")
        if self.reps < 1:
            raise RejectedBatch("reps must be positive")
        if not _rows_unique(items[None, :]):
            raise SelfComparison("within block repeats an item")
        object.__setattr__(self, "items", items)

    @property
    def cells(self) -> int:
        m = len(self.items)
        return m * (m - 1) // 2

    @property
    def comparisons(self) -> int:
        return self.reps * self.cells

    def same_as(self, other) -> bool:
        return (
            isinstance(other, Within)
            and self.reps == other.reps
            and np.array_equal(self.items, other.items)
        )


@dataclass(frozen=True, eq=False)
class Pairs:
    a: np.ndarray
    b: np.ndarray
    reps: int = 1

    def __post_init__(self):
        a, b = _as_items(self.a).ravel(), _as_items(self.b).ravel()
        if a.shape != b.shape:
            raise RejectedBatch("pair arrays differ in length")
        if self.reps < 1:
            raise RejectedBatch("reps must be positive")
        if np.any(a == b):
            raise SelfComparison("pairs block contains a self-comparison")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def cells(self) -> int:
        return len(self.a)

    @property
    def comparisons(self) -> int:
        return self.reps * self.cells

    def same_as(self, other) -> bool:
        return (
            isinstance(other, Pairs)
            and self.reps == other.reps
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )


Block = Cross | Within | Pairs


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class _Oracle:
    gt: GroundTruth
    noise: NoiseModel
    run_seed: int
    round_index: int
    flip: bool = False  # used by the adaptiveness audit only

    def wins(self, ordinals, a, b, reps: int) -> np.ndarray:
        """Win counts of ``a`` over ``b`` for each cell."""
        ranks = self.gt.rank_of
        a_better = ranks[a] < ranks[b]
        if self.noise.is_noiseless:
            wins = np.where(a_better, reps, 0)
        else:
            u = uniforms(self.run_seed, self.round_index, ordinals)
            wrong = wrong_counts(u, reps, self.noise.p)
            wins = np.where(a_better, reps - wrong, wrong)
        return reps - wins if self.flip else wins

    def a_majority(self, ordinals, a, b, reps: int) -> np.ndarray:
        """True where ``a`` wins strictly more than half of the repetitions."""
        ranks = self.gt.rank_of
        a_better = ranks[a] < ranks[b]
        if reps % 2 == 0:
            return 2 * self.wins(ordinals, a, b, reps) > reps
        if not self.noise.is_noiseless:
            u = uniforms(self.run_seed, self.round_index, ordinals)
            a_better = a_better ^ majority_wrong(u, reps, self.noise.p)
        return ~a_better if self.flip else a_better


class CrossResult:
    """Outcomes of a :class:`Cross` block.  Indexed by (instance, row, column)."""

    def __init__(self, block: Cross, oracle: _Oracle, offset: int):
        self.block = block
        self.reps = block.reps
        self._oracle = oracle
        self._offset = offset

    def _cells(self, inst, row, col):
        inst, row, col = np.broadcast_arrays(
            np.asarray(inst, dtype=np.int64),
            np.asarray(row, dtype=np.int64),
            np.asarray(col, dtype=np.int64),
        )
        _, nr = self.block.left.shape
        nc = self.block.right.shape[1]
        ords = self._offset + (inst * nr + row) * nc + col
        a = self.block.left[inst, row]
        b = self.block.right[inst, col]
        return ords, a, b

    def row_wins_at(self, inst, row, col) -> np.ndarray:
        ords, a, b = self._cells(inst, row, col)
        void = a == b
        wins = self._oracle.wins(ords, a, b, self.reps)
        return np.where(void, 0, wins)

    def col_beats_row_at(self, inst, row, col) -> np.ndarray:
        """Majority verdict that the column item beats the row item.  Void cells are False."""
        ords, a, b = self._cells(inst, row, col)
        void = a == b
        col_wins = ~self._oracle.a_majority(ords, a, b, self.reps)
        return col_wins & ~void

    def row_beats_col_at(self, inst, row, col) -> np.ndarray:
        ords, a, b = self._cells(inst, row, col)
        void = a == b
        return self._oracle.a_majority(ords, a, b, self.reps) & ~void

    def _dense(self):
        # whole-block evaluation without materializing index grids
        nb, nr = self.block.left.shape
        nc = self.block.right.shape[1]
        ords = (self._offset + np.arange(nb * nr * nc, dtype=np.int64)).reshape(nb, nr, nc)
        a = np.broadcast_to(self.block.left[:, :, None], ords.shape)
        b = np.broadcast_to(self.block.right[:, None, :], ords.shape)
        return ords, a, b, a == b

    @cached_property
    def row_wins(self) -> np.ndarray:
        ords, a, b, void = self._dense()
        return np.where(void, 0, self._oracle.wins(ords, a, b, self.reps))

    @cached_property
    def row_beats_col(self) -> np.ndarray:
        ords, a, b, void = self._dense()
        return self._oracle.a_majority(ords, a, b, self.reps) & ~void

    @cached_property
    def col_beats_row(self) -> np.ndarray:
        ords, a, b, void = self._dense()
        return ~self._oracle.a_majority(ords, a, b, self.reps) & ~void


@lru_cache(maxsize=64)
def _triu(m: int):
    i, j = np.triu_indices(m, 1)
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


class WithinResult:
    def __init__(self, block: Within, oracle: _Oracle, offset: int):
        self.block = block
        self.reps = block.reps
        self._oracle = oracle
        self._offset = offset

    @cached_property
    def _pairs(self):
        return _triu(len(self.block.items))

    @cached_property
    def wins(self) -> np.ndarray:
        """Win counts of the first item of each ``triu`` pair."""
        i, j = self._pairs
        items = self.block.items
        ords = self._offset + np.arange(len(i))
        return self._oracle.wins(ords, items[i], items[j], self.reps)

    @cached_property
    def first_majority(self) -> np.ndarray:
        i, j = self._pairs
        items = self.block.items
        ords = self._offset + np.arange(len(i))
        return self._oracle.a_majority(ords, items[i], items[j], self.reps)

    @cached_property
    def beats(self) -> np.ndarray:
        """``beats[x, y]``: item ``x`` beats item ``y`` by majority (positions in the block)."""
        m = len(self.block.items)
        i, j = self._pairs
        out = np.zeros((m, m), dtype=bool)
        first = self.first_majority
        if self.reps % 2 == 0:
            second = 2 * (self.reps - self.wins) > self.reps
        else:
            second = ~first
        out[i, j] = first
        out[j, i] = second
        return out

    @cached_property
    def beat_counts(self) -> np.ndarray:
        return self.beats.sum(axis=1)


class PairsResult:
    def __init__(self, block: Pairs, oracle: _Oracle, offset: int):
        self.block = block
        self.reps = block.reps
        self._oracle = oracle
        self._offset = offset

    @cached_property
    def wins(self) -> np.ndarray:
        ords = self._offset + np.arange(self.block.cells)
        return self._oracle.wins(ords, self.block.a, self.block.b, self.reps)

    @cached_property
    def first_majority(self) -> np.ndarray:
        ords = self._offset + np.arange(self.block.cells)
        return self._oracle.a_majority(ords, self.block.a, self.block.b, self.reps)

    @property
    def winners(self) -> np.ndarray:
        return np.where(self.first_majority, self.block.a, self.block.b)


_RESULT_TYPES = {Cross: CrossResult, Within: WithinResult, Pairs: PairsResult}


def evaluate_blocks(blocks: Sequence[Block], oracle: _Oracle) -> list:
    results, offset = [], 0
    for block in blocks:
        results.append(_RESULT_TYPES[type(block)](block, oracle, offset))
        offset += block.cells
    return results


@dataclass(frozen=True)
class _LiftedOracle:
    """Reports the majority of ``factor`` repetitions as one outcome."""

    base: Any
    factor: int

    def wins(self, ordinals, a, b, reps: int) -> np.ndarray:
        return np.where(self.base.a_majority(ordinals, a, b, reps * self.factor), reps, 0)

    def a_majority(self, ordinals, a, b, reps: int) -> np.ndarray:
        return self.base.a_majority(ordinals, a, b, reps * self.factor)


def lift_block(block: Block, factor: int) -> Block:
    """The same requests with every repetition count multiplied by ``factor``."""
    if isinstance(block, Cross):
        return Cross(block.left, block.right, block.reps * factor)
    if isinstance(block, Within):
        return Within(block.items, block.reps * factor)
    return Pairs(block.a, block.b, block.reps * factor)


def lower_results(inner_blocks: Sequence[Block], outer_results: Sequence, factor: int) -> list:
    """Results of lifted blocks, seen by the inner algorithm as majority verdicts."""
    return [
        _RESULT_TYPES[type(block)](block, _LiftedOracle(res._oracle, factor), res._offset)
        for block, res in zip(inner_blocks, outer_results)
    ]


# ---------------------------------------------------------------------------
# algorithms


@dataclass(frozen=True)
class Final:
    output: Any


@dataclass(frozen=True)
class RoundBatch:
    round_index: int
    blocks: tuple

    @property
    def comparisons(self) -> int:
        return sum(b.comparisons for b in self.blocks)

    def same_as(self, other: "RoundBatch") -> bool:
        return len(self.blocks) == len(other.blocks) and all(
            x.same_as(y) for x, y in zip(self.blocks, other.blocks)
        )


class RoundAlgorithm:
    """Round-by-round state machine driven by :func:`execute`.

    Subclasses implement :meth:`run` as a generator.  ``padding`` asks the
    harness to extend the universe with (top, bottom) dummy items; ``budget``
    is a default comparison cap; ``task`` picks the correctness check.
    """

    task = "sorted_topk"
    padding: tuple[int, int] = (0, 0)
    budget: int | None = None
    max_rounds: int = 1
    n: int = 0
    k: int = 0

    def run(self) -> Generator[list, list, Any]:
        raise NotImplementedError

    def next_batch(self, outcomes=None):
        gen = self.__dict__.get("_gen")
        try:
            if gen is None:
                gen = self._gen = self.run()
                blocks = next(gen)
            else:
                blocks = gen.send(outcomes)
        except StopIteration as stop:
            return Final(stop.value)
        return list(blocks)

    def finalize_on_halt(self):
        return None


def parallel(gens: Iterable[Generator]) -> Generator[list, list, list]:
    """Drive sub-algorithm generators in lockstep, one shared batch per round."""
    gens = list(gens)
    outputs: list = [None] * len(gens)
    pending: dict[int, list] = {}
    for i, g in enumerate(gens):
        try:
            pending[i] = list(next(g))
        except StopIteration as stop:
            outputs[i] = stop.value
    while pending:
        blocks, spans = [], []
        for i, batch in pending.items():
            spans.append((i, len(blocks), len(batch)))
            blocks.extend(batch)
        results = (yield blocks) if blocks else []
        nxt = {}
        for i, start, count in spans:
            try:
                nxt[i] = list(gens[i].send(results[start : start + count]))
            except StopIteration as stop:
                outputs[i] = stop.value
        pending = nxt
    return outputs


# ---------------------------------------------------------------------------
# execution


@dataclass
class RoundRecord:
    batch: RoundBatch
    results: list | None  # None when the batch was cut by the budget
    comparisons: int


@dataclass
class RunStats:
    comparisons_per_round: list[int] = field(default_factory=list)
    halted: bool = False
    output: Any = None
    correct: bool | None = None
    transcript: list[RoundRecord] = field(default_factory=list, repr=False)

    @property
    def total_comparisons(self) -> int:
        return sum(self.comparisons_per_round)

    @property
    def rounds_used(self) -> int:
        return len(self.comparisons_per_round)


_EARLY: contextvars.ContextVar[Callable | None] = contextvars.ContextVar("early", default=None)


def early_outcome(a: int, b: int) -> int | None:
    """Winner of (a, b) in the round being assembled, if delivered early.

    The execution model never delivers early, so honest algorithms never need
    this; it exists so :func:`audit_adaptiveness` can tempt adaptive ones.
    """
    peek = _EARLY.get()
    return None if peek is None else peek(a, b)


_UNSET = object()


def execute(
    alg: RoundAlgorithm,
    gt: GroundTruth,
    noise: NoiseModel,
    max_rounds: int | None = None,
    budget: int | None | object = _UNSET,
    run_seed: int = 0,
    *,
    keep_transcript: bool = True,
    _flip_round: int | None = None,
    _observe: Callable[[RoundBatch], None] | None = None,
) -> RunStats:
    """Run ``alg`` to completion against ``gt`` and return its statistics.

    ``budget`` defaults to ``alg.budget``; when issuing a batch would exceed
    it, only the fitting prefix is counted, the run halts, and the output
    comes from ``alg.finalize_on_halt()``.
    """
    if max_rounds is None:
        max_rounds = alg.max_rounds
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    if budget is _UNSET:
        budget = alg.budget
    gt = gt.padded(*alg.padding)
    stats = RunStats()
    outcomes = None
    round_index = 0
    while True:
        step = alg.next_batch(outcomes)
        if isinstance(step, Final):
            stats.output = step.output
            return stats
        round_index += 1
        if round_index > max_rounds:
            raise RoundLimitExceeded(f"algorithm issued more than {max_rounds} rounds")
        batch = RoundBatch(round_index, tuple(step))
        if _observe is not None:
            _observe(batch)
        for block in batch.blocks:
            _check_universe(block, gt.n)
        cost = batch.comparisons
        if budget is not None and stats.total_comparisons + cost > budget:
            allowed = budget - stats.total_comparisons
            stats.comparisons_per_round.append(allowed)
            stats.halted = True
            if keep_transcript:
                stats.transcript.append(RoundRecord(batch, None, allowed))
            stats.output = alg.finalize_on_halt()
            return stats
        oracle = _Oracle(gt, noise, run_seed, round_index, flip=_flip_round == round_index)
        outcomes = evaluate_blocks(batch.blocks, oracle)
        stats.comparisons_per_round.append(cost)
        if keep_transcript:
            stats.transcript.append(RoundRecord(batch, outcomes, cost))


def _check_universe(block: Block, n: int) -> None:
    arrays = (block.left, block.right) if isinstance(block, Cross) else (
        (block.items,) if isinstance(block, Within) else (block.a, block.b)
    )
    for arr in arrays:
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise RejectedBatch("request names an item outside the universe")


# ---------------------------------------------------------------------------
# adaptiveness audit


@dataclass
class AuditReport:
    passed: bool
    probes: int
    failures: list[str] = field(default_factory=list)


def _batches(alg, gt, noise, run_seed, peek, flip_round) -> list[RoundBatch]:
    seen: list[RoundBatch] = []
    token = _EARLY.set(peek)
    try:
        execute(alg, gt, noise, budget=None, run_seed=run_seed, keep_transcript=False,
                _flip_round=flip_round, _observe=seen.append)
    except Exception:
        # inverted outcomes may contradict earlier rounds; the batches issued
        # up to that point are all the audit needs
        if flip_round is None:
            raise
    finally:
        _EARLY.reset(token)
    return seen


def audit_adaptiveness(
    alg_factory: Callable[[], RoundAlgorithm],
    probe_count: int,
    *,
    gt_factory: Callable[[int], GroundTruth] | None = None,
    noise: NoiseModel | None = None,
    seed: int = 0,
) -> AuditReport:
    """Check that batch t depends only on outcomes of rounds before t.

    Each probe runs two identically seeded instances on the same ground truth
    and noise.  In the first, round-t outcomes are available early (through
    :func:`early_outcome`) and delivered as drawn; in the second, the early
    view and the delivered round-t outcomes are both inverted.  Batches 1..t
    must coincide.
    """
    from .model import make_ground_truth

    noise = noise or NoiseModel()
    rng = np.random.default_rng(seed)
    report = AuditReport(True, probe_count)
    for probe in range(probe_count):
        probe_seed = int(rng.integers(2**63))
        run_seed = int(rng.integers(2**63))
        reference = alg_factory()
        gt = gt_factory(probe_seed) if gt_factory else make_ground_truth(reference.n or 1, probe_seed)
        base = _batches(reference, gt, noise, run_seed, None, None)
        if not base:
            continue
        t = int(rng.integers(1, len(base) + 1))
        padded = gt.padded(*reference.padding)

        def truthful(a, b, _gt=padded):
            return a if _gt.rank_of[a] < _gt.rank_of[b] else b

        def inverted(a, b, _gt=padded):
            return b if _gt.rank_of[a] < _gt.rank_of[b] else a

        runs = []
        for peek, flip in ((truthful, None), (inverted, t)):
            runs.append(_batches(alg_factory(), gt, noise, run_seed, peek, flip))
        early, late = runs
        for r in range(t):
            if r >= len(early) or r >= len(late) or not early[r].same_as(late[r]):
                report.passed = False
                report.failures.append(f"probe {probe}: batch {r + 1} differs (divergent round {t})")
                break
    return report

