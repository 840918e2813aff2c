"""Success-rate intervals, log-log scaling fits, and exhaustive small-instance checks."""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import binomtest

from .harness import Cross, Pairs, RoundAlgorithm, Within, execute
from .model import GroundTruth, InvalidParameter, NoiseModel, true_sorted_topk

__all__ = [
    "Counterexample",
    "ExhaustiveReport",
    "InsufficientData",
    "ScalingFit",
    "SuccessEstimate",
    "check_output",
    "estimate_success_rate",
    "all_rankings",
    "exhaustive_case",
    "exhaustive_many",
    "exhaustive_small_check",
    "fit_scaling_exponent",
    "wilson_interval",
]


class InsufficientData(ValueError):
    pass


def check_output(task: str, output, gt: GroundTruth, k: int) -> bool:
    """Compare an algorithm's output with the truth for its task kind."""
    if output is None:
        return False
    out = [int(x) for x in output]
    if task == "sorted_topk":
        return out == true_sorted_topk(gt, k)
    if task == "topk":
        return len(out) == k and set(out) == set(true_sorted_topk(gt, k))
    if task == "sort":
        return out == true_sorted_topk(gt, gt.n_real)
    raise InvalidParameter(f"unknown task kind {task!r}")


# ---------------------------------------------------------------------------
# success rates


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class SuccessEstimate:
    successes: int
    trials: int
    low: float
    high: float

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @classmethod
    def from_flags(cls, flags) -> "SuccessEstimate":
        flags = [bool(f) for f in flags]
        s, t = sum(flags), len(flags)
        return cls(s, t, *wilson_interval(s, t))


def estimate_success_rate(config, trials: int | None = None, base_seed: int | None = None, jobs: int = 1):
    """Run independent seeded trials of ``config`` and return the rate with a Wilson interval.

    Returns ``(estimate, records)``.
    """
    from .experiment import run_trials

    changes = {}
    if trials is not None:
        changes["trials"] = trials
    if base_seed is not None:
        changes["base_seed"] = base_seed
    config = config.replace(**changes)
    if config.trials < 30:
        raise InvalidParameter("success-rate estimates need at least 30 trials")
    records = run_trials(config, jobs=jobs)
    return SuccessEstimate.from_flags(r.correct for r in records), records


# ---------------------------------------------------------------------------
# scaling fits


@dataclass(frozen=True)
class ScalingFit:
    points: tuple
    slope: float
    intercept: float
    residual: float  # root mean square of log residuals


def fit_scaling_exponent(points) -> ScalingFit:
    """Least-squares slope of log(mean) against log(n)."""
    pts = sorted((float(n), float(v)) for n, v in points)
    if len(pts) < 3:
        raise InsufficientData(f"need at least 3 points, got {len(pts)}")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if len(np.unique(xs)) != len(xs):
        raise InvalidParameter("grid sizes must be distinct")
    if (xs <= 0).any() or (ys <= 0).any():
        raise InvalidParameter("sizes and means must be positive")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return ScalingFit(tuple(pts), float(slope), float(intercept), float(math.sqrt(np.mean(resid**2))))


# ---------------------------------------------------------------------------
# exhaustive checks


@dataclass
class Counterexample:
    n: int
    k: int
    seed: int
    rank_of: list
    output: object
    expected: list
    transcript: list = field(repr=False)


@dataclass
class ExhaustiveReport:
    cases: int = 0
    runs: int = 0
    failures: list[Counterexample] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def merge(self, other: "ExhaustiveReport") -> "ExhaustiveReport":
        self.cases += other.cases
        self.runs += other.runs
        self.failures.extend(other.failures)
        return self


def _requested_pairs(blocks) -> tuple[np.ndarray, np.ndarray]:
    a_parts, b_parts = [], []
    for block in blocks:
        if isinstance(block, Cross):
            a = np.broadcast_to(block.left[:, :, None], (*block.left.shape, block.right.shape[1])).ravel()
            b = np.broadcast_to(block.right[:, None, :], (block.left.shape[0], *block.left.shape[1:], block.right.shape[1])).ravel()
            keep = a != b
            a_parts.append(a[keep])
            b_parts.append(b[keep])
        elif isinstance(block, Within):
            i, j = np.triu_indices(len(block.items), 1)
            a_parts.append(block.items[i])
            b_parts.append(block.items[j])
        elif isinstance(block, Pairs):
            a_parts.append(block.a)
            b_parts.append(block.b)
    if not a_parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(a_parts), np.concatenate(b_parts)


def _expected(task: str, ranks: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(ranks, axis=1)
    return order[:, : (ranks.shape[1] if task == "sort" else k)]


def _matches(task: str, output, expected: np.ndarray) -> np.ndarray:
    if output is None:
        return np.zeros(len(expected), dtype=bool)
    out = np.asarray([int(x) for x in output], dtype=np.int64)
    if len(out) != expected.shape[1]:
        return np.zeros(len(expected), dtype=bool)
    if task == "topk":
        return (np.sort(expected, axis=1) == np.sort(out)).all(axis=1)
    return (expected == out).all(axis=1)


def _explore(make: Callable[[], RoundAlgorithm], ranks: np.ndarray, k: int, seed: int, report: ExhaustiveReport):
    """Run ``make()`` once per distinct noiseless transcript over all rows of ``ranks``.

    Ground truths that agree on every requested comparison see identical
    outcomes, hence identical batches and output, so one run settles the whole
    group.  Groups split at the first round where outcomes differ.
    """
    noise = NoiseModel.noiseless()
    pending = [(np.arange(len(ranks)), 0)]
    while pending:
        group, settled = pending.pop()
        rep = int(group[0])
        alg = make()
        stats = execute(alg, GroundTruth(ranks[rep]), noise, budget=None)
        report.runs += 1
        same = group
        for t, record in enumerate(stats.transcript):
            if t < settled or len(same) == 1:
                continue
            a, b = _requested_pairs(record.batch.blocks)
            if len(a) == 0:
                continue
            sig = ranks[same][:, a] < ranks[same][:, b]
            agree = (sig == sig[0]).all(axis=1)
            if not agree.all():
                others, osig = same[~agree], sig[~agree]
                _, labels = np.unique(osig, axis=0, return_inverse=True)
                for lab in np.unique(labels):
                    pending.append((others[labels.ravel() == lab], t + 1))
                same = same[agree]
        expected = _expected(alg.task, ranks[same], k)
        ok = _matches(alg.task, stats.output, expected)
        report.cases += len(same)
        for idx in np.flatnonzero(~ok):
            row = int(same[idx])
            report.failures.append(
                Counterexample(
                    ranks.shape[1], k, seed, ranks[row].tolist(), stats.output, expected[idx].tolist(),
                    [[blk for blk in rec.batch.blocks] for rec in stats.transcript],
                )
            )


@lru_cache(maxsize=None)
def all_rankings(n: int) -> np.ndarray:
    """Every ``rank_of`` array over ``n`` items, one per row."""
    out = np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.int64).reshape(-1, n)
    out.setflags(write=False)
    return out


def exhaustive_case(factory: Callable[[int, int, int], RoundAlgorithm | None], n: int, k: int, seed: int) -> ExhaustiveReport:
    """Check one (n, k, seed) combination against all n! rankings."""
    report = ExhaustiveReport()
    if factory(n, k, seed) is not None:
        _explore(lambda: factory(n, k, seed), all_rankings(n), k, seed, report)
    return report


def exhaustive_units(n_max: int, seeds=(0, 1, 2), ks: Callable[[int], range] | None = None, n_min: int = 1):
    """The (n, k, seed) combinations an exhaustive check covers, largest first."""
    if n_max > 8:
        raise InvalidParameter("exhaustive checks are limited to n <= 8")
    units = [(n, k, s) for n in range(n_min, n_max + 1) for k in (ks(n) if ks else range(1, n + 1)) for s in seeds]
    return sorted(units, key=lambda u: -u[0])


# worker processes read the factories from here (set before forking)
_FACTORIES: list = []


def _unit_worker(args):
    idx, n, k, seed = args
    return idx, exhaustive_case(_FACTORIES[idx], n, k, seed)


def exhaustive_small_check(
    factory: Callable[[int, int, int], RoundAlgorithm | None],
    n_max: int,
    seeds=(0, 1, 2),
    ks: Callable[[int], range] | None = None,
    n_min: int = 1,
    jobs: int = 1,
) -> ExhaustiveReport:
    """Check ``factory(n, k, seed)`` against every ranking of ``n <= n_max`` items, noiselessly.

    ``factory`` may return None to skip a combination.  ``ks`` picks the k
    values per n (default all of 1..n).
    """
    return exhaustive_many([factory], n_max, seeds, ks, n_min, jobs)[0]


def exhaustive_many(factories, n_max: int, seeds=(0, 1, 2), ks=None, n_min: int = 1, jobs: int = 1) -> list[ExhaustiveReport]:
    """:func:`exhaustive_small_check` for several factories, sharing one process pool.

    ``ks`` may be a single callable or one per factory.
    """
    factories = list(factories)
    ks_list = ks if isinstance(ks, (list, tuple)) else [ks] * len(factories)
    work = [
        (i, n, k, s)
        for i, f in enumerate(factories)
        for n, k, s in exhaustive_units(n_max, seeds, ks_list[i], n_min)
    ]
    work.sort(key=lambda w: -w[1])
    reports = [ExhaustiveReport() for _ in factories]
    if jobs <= 1:
        for i, n, k, s in work:
            reports[i].merge(exhaustive_case(factories[i], n, k, s))
        return reports
    import multiprocessing

    global _FACTORIES
    _FACTORIES = factories
    try:
        with multiprocessing.get_context("fork").Pool(jobs) as pool:
            for i, rep in pool.imap_unordered(_unit_worker, work):
                reports[i].merge(rep)
    finally:
        _FACTORIES = []
    return reports
