"""Named verification suites shared by the command line and the acceptance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import noiseless as nl
from . import noisy as nz
from .harness import Pairs, RoundAlgorithm, _Oracle, audit_adaptiveness, early_outcome, execute
from .model import NoiseModel, make_ground_truth
from .verify import ExhaustiveReport, exhaustive_many

__all__ = [
    "AdaptiveDouble",
    "EXHAUSTIVE_ALGORITHMS",
    "SUITES",
    "SuiteResult",
    "adaptiveness_suite",
    "budgets_suite",
    "exhaustive_suite",
    "oracle_marginal",
    "oracle_suite",
    "placement_suite",
    "placement_tail",
    "shipped_algorithms",
]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def check(self, ok: bool, line: str) -> bool:
        self.lines.append(("ok   " if ok else "FAIL ") + line)
        self.passed &= bool(ok)
        return ok


# ---------------------------------------------------------------------------
# exhaustive


def _only_k_n(n):
    return [n]


# name -> (factory(n, k, seed), k selector or None for every k)
EXHAUSTIVE_ALGORITHMS: dict[str, tuple[Callable, Callable | None]] = {
    "one_round_sorted_topk": (lambda n, k, s: nl.one_round_sorted_topk(n, k, s), None),
    "rsorted1 r=2": (lambda n, k, s: nl.rsorted1(n, k, 2, s), None),
    "rsorted1 r=3": (lambda n, k, s: nl.rsorted1(n, k, 3, s), None),
    "rsorted2 r=3": (lambda n, k, s: nl.rsorted2(n, k, 3, s), None),
    "noiseless_dispatch r=1": (lambda n, k, s: nl.noiseless_sorted_topk(n, k, 1, s), None),
    "noiseless_dispatch r=2": (lambda n, k, s: nl.noiseless_sorted_topk(n, k, 2, s), None),
    "noiseless_dispatch r=3": (lambda n, k, s: nl.noiseless_sorted_topk(n, k, 3, s), None),
    "noiseless_dispatch r=4": (lambda n, k, s: nl.noiseless_sorted_topk(n, k, 4, s), None),
    "r_round_sort r=1": (lambda n, k, s: nl.r_round_sort(n, 1, s), _only_k_n),
    "r_round_sort r=2": (lambda n, k, s: nl.r_round_sort(n, 2, s), _only_k_n),
    "r_round_sort r=3": (lambda n, k, s: nl.r_round_sort(n, 3, s), _only_k_n),
}


def exhaustive_suite(n_max: int = 8, seeds=(0, 1, 2), jobs: int = 1, names=None) -> SuiteResult:
    names = list(names or EXHAUSTIVE_ALGORITHMS)
    entries = [EXHAUSTIVE_ALGORITHMS[name] for name in names]
    reports = exhaustive_many([f for f, _ in entries], n_max, seeds, [ks for _, ks in entries], jobs=jobs)
    result = SuiteResult("exhaustive", True)
    for name, rep in zip(names, reports):
        result.check(rep.passed, f"{name}: {rep.cases} cases, {rep.runs} runs, {len(rep.failures)} failures")
        result.details[name] = rep
    return result


def counterexample_dump(report: ExhaustiveReport, limit: int = 3) -> list[str]:
    out = []
    for cx in report.failures[:limit]:
        out.append(f"  n={cx.n} k={cx.k} seed={cx.seed} rank_of={cx.rank_of} output={cx.output} expected={cx.expected}")
        for t, blocks in enumerate(cx.transcript, 1):
            out.append(f"    round {t}: {blocks}")
    return out


# ---------------------------------------------------------------------------
# oracle


def oracle_marginal(draws: int = 10**6, p: float = 2 / 3, run_seed: int = 0) -> float:
    """Fraction of correct single outcomes for one fixed pair over ``draws`` ordinals."""
    gt = make_ground_truth(2, 0)
    better = int(np.argmin(gt.rank_of))
    oracle = _Oracle(gt, NoiseModel("bernoulli", p), run_seed, 1)
    a = np.full(draws, better, dtype=np.int64)
    wins = oracle.wins(np.arange(draws, dtype=np.int64), a, 1 - a, 1)
    return float(wins.mean())


def oracle_suite(draws: int = 10**6, tolerance: float = 0.002) -> SuiteResult:
    result = SuiteResult("oracle", True)
    p = 2 / 3
    freq = oracle_marginal(draws, p)
    result.check(abs(freq - p) <= tolerance, f"p=2/3 marginal {freq:.5f} at {draws} draws (tolerance {tolerance})")
    # the same coordinates give the same outcomes
    again = oracle_marginal(draws, p)
    result.check(again == freq, "identical coordinates reproduce identical outcomes")
    # a pair repeated across ordinals: independent draws, and a repeated cell sees reps independent draws
    gt = make_ground_truth(2, 0)
    better = int(np.argmin(gt.rank_of))
    oracle = _Oracle(gt, NoiseModel("bernoulli", p), 7, 1)
    reps = 9
    m = 100_000
    a = np.full(m, better, dtype=np.int64)
    wins = oracle.wins(np.arange(m, dtype=np.int64), a, 1 - a, reps)
    mean, sd = reps * p, math.sqrt(reps * p * (1 - p) / m)
    result.check(abs(wins.mean() - mean) <= 4 * sd, f"repeated-cell win count mean {wins.mean():.4f} vs {mean:.4f}")
    noiseless = _Oracle(gt, NoiseModel.noiseless(), 7, 1).wins(np.arange(1000), a[:1000], 1 - a[:1000], 1)
    result.check(bool((noiseless == 1).all()), "noiseless oracle always agrees with the order")
    return result


def placement_tail(n: int = 4096, seeds=(0,), constants: nz.AlgoConstants | None = None, d_max: int = 10) -> np.ndarray:
    """Fraction of non-pivot items whose walk placement is off by at least d, for d = 0..d_max.

    The true chunk index of an item is the number of round-one pivots that
    outrank it; the placement comes from a full two-round top-k run at p = 2/3.
    """
    far = np.zeros(d_max + 1)
    total = 0
    for seed in seeds:
        gt = make_ground_truth(n, seed)
        alg = nz.two_round_topk(n, n // 2, constants, seed)
        execute(alg, gt, NoiseModel("bernoulli", 2 / 3), run_seed=seed, keep_transcript=False)
        place = alg.placement
        ranks = gt.padded(*alg.padding).rank_of
        truth = np.searchsorted(np.sort(ranks[place.S]), ranks, side="left")
        rest = np.ones(len(ranks), dtype=bool)
        rest[place.S] = False
        err = np.abs(place.p[rest] - truth[rest])
        far += [(err >= d).sum() for d in range(d_max + 1)]
        total += int(rest.sum())
    return far / total


def placement_suite(n: int = 4096, seeds=(0, 1, 2), beta: float = 0.9) -> SuiteResult:
    result = SuiteResult("placement", True)
    for label, consts in (("c1 at full scale", None), ("single comparisons", nz.AlgoConstants(c1=1, c2=1, constant_scale=1.0))):
        tail = placement_tail(n, seeds, consts)
        worst = max(tail[d] / (3 * beta**d) for d in range(1, len(tail)))
        result.check(worst < 1, f"placement tail, {label}: max_d frac(>=d) / (3*{beta}^d) = {worst:.4f}")
        result.details[label] = tail
    return result


# ---------------------------------------------------------------------------
# adaptiveness and round counts


class AdaptiveDouble(RoundAlgorithm):
    """Deliberately adaptive: its first batch depends on an outcome of that same batch."""

    max_rounds = 1

    def __init__(self, n: int = 4):
        self.n, self.k = n, 1

    def run(self):
        seen = early_outcome(0, 1)
        second = 2 if seen in (None, 0) else 3
        (res,) = yield [Pairs([0, 0], [1, second])]
        return [int(res.winners[0])]


def shipped_algorithms(scale: float = 0.01) -> dict[str, tuple[Callable[[], RoundAlgorithm], int]]:
    """Small instances of every shipped algorithm, with the round bound each must respect.

    Noiseless algorithms are audited under the noiseless oracle, the rest at p = 2/3.
    """
    c = nz.AlgoConstants(constant_scale=scale)
    full = nz.AlgoConstants()
    return {
        "one_round_sorted_topk": (lambda: nl.one_round_sorted_topk(20, 5, 1), 1),
        "rsorted1 r=2": (lambda: nl.rsorted1(40, 8, 2, 1), 2),
        "rsorted1 r=3": (lambda: nl.rsorted1(40, 8, 3, 1), 3),
        "rsorted2 r=3": (lambda: nl.rsorted2(200, 40, 3, 1), 3),
        "noiseless_dispatch r=1": (lambda: nl.noiseless_sorted_topk(30, 6, 1, 1), 1),
        "noiseless_dispatch r=2": (lambda: nl.noiseless_sorted_topk(60, 6, 2, 1), 2),
        "noiseless_dispatch r=3": (lambda: nl.noiseless_sorted_topk(200, 6, 3, 1), 3),
        "noiseless_dispatch r=4": (lambda: nl.noiseless_sorted_topk(200, 6, 4, 1), 4),
        "r_round_sort r=3": (lambda: nl.r_round_sort(60, 3, 1), 3),
        "find_max": (lambda: nz.find_max(16, 1 / 9, c, 1), 1),
        "one_round_topk": (lambda: nz.one_round_topk(64, 8, c, 1), 1),
        "two_round_topk": (lambda: nz.two_round_topk(64, 8, c, 1), 2),
        "one_round_sorted_topk_noisy": (lambda: nz.one_round_sorted_topk_noisy(32, 4, c, 1), 1),
        "two_round_sorted_topk_noisy small k": (
            lambda: nz.two_round_sorted_topk_noisy(64, 2, c, 1, small_k_threshold=3), 2),
        # lifts keep full repetitions: their inner algorithm assumes consistent majorities
        "two_round_sorted_topk_noisy large k": (lambda: nz.two_round_sorted_topk_noisy(64, 16, full, 1), 2),
        "repeat_lift r=3": (lambda: nz.repeat_lift(nl.noiseless_sorted_topk(60, 6, 3, 1), nz.lift_reps(60)), 3),
    }


def _is_noisy(alg) -> bool:
    return type(alg).__module__ == nz.__name__


def adaptiveness_suite(probes: int = 4, seed: int = 0) -> SuiteResult:
    result = SuiteResult("adaptiveness", True)
    for name, (make, bound) in shipped_algorithms().items():
        noise = NoiseModel() if _is_noisy(make()) else NoiseModel.noiseless()
        report = audit_adaptiveness(make, probes, noise=noise, seed=seed)
        result.check(report.passed, f"{name}: batches independent of same-round outcomes ({probes} probes)")
        rounds = []
        for trial in range(3):
            alg = make()
            stats = execute(alg, make_ground_truth(alg.n, 100 + trial), noise, run_seed=trial, keep_transcript=False)
            rounds.append(stats.rounds_used)
        result.check(max(rounds) <= bound, f"{name}: rounds used {max(rounds)} <= {bound}")
    double = audit_adaptiveness(lambda: AdaptiveDouble(4), probes, noise=NoiseModel(), seed=seed)
    result.check(not double.passed, "adaptive test double is caught")
    return result


# ---------------------------------------------------------------------------
# budgets and exact counts


def budgets_suite(trials: int = 3, n_alg5: int = 1024) -> SuiteResult:
    result = SuiteResult("budgets", True)
    noiseless, noise = NoiseModel.noiseless(), NoiseModel()

    stats = execute(nl.one_round_sorted_topk(100, 10), make_ground_truth(100, 1), noiseless)
    result.check(stats.total_comparisons == 4950, f"one_round_sorted_topk n=100 uses {stats.total_comparisons} == 4950")

    stats = execute(nz.find_max(4), make_ground_truth(4, 1), noise)
    result.check(stats.total_comparisons == 1546, f"find_max |S|=4 uses {stats.total_comparisons} == 1546")

    consts = nz.AlgoConstants()
    for n in (256, 1024):
        alg = nz.one_round_topk(n, n // 4, consts, 1)
        stats = execute(alg, make_ground_truth(n, 1), noise)
        bound = nz.one_round_topk_static_bound(n, consts)
        closed = nz.one_round_topk_comparisons(n, consts)
        result.check(
            stats.total_comparisons == closed and closed <= bound,
            f"one_round_topk n={n} batch {stats.total_comparisons} == closed form {closed} <= static bound {bound:.0f}",
        )

    n, k = 128, 8
    stats = execute(nz.one_round_sorted_topk_noisy(n, k, consts, 1), make_ground_truth(n, 1), noise)
    closed = nz.one_round_sorted_topk_noisy_comparisons(n, k, consts)
    result.check(stats.total_comparisons == closed, f"one_round_sorted_topk_noisy n={n} k={k} uses {stats.total_comparisons} == {closed}")

    for trial in range(trials):
        alg = nz.two_round_topk(n_alg5, n_alg5 // 2, consts, trial)
        stats = execute(alg, make_ground_truth(n_alg5, trial), noise, run_seed=trial, keep_transcript=False)
        result.check(
            stats.total_comparisons <= alg.budget,
            f"two_round_topk n={n_alg5} trial {trial}: {stats.total_comparisons} <= budget {alg.budget}",
        )

    # a budget below the first batch: prefix counted exactly, run halts, output still has k items
    alg = nz.two_round_topk(256, 64, consts, 0)
    cap = 1000
    stats = execute(alg, make_ground_truth(256, 0), noise, budget=cap)
    result.check(
        stats.halted and stats.total_comparisons == cap and len(stats.output) == 64,
        f"forced halt: halted={stats.halted}, counted {stats.total_comparisons} == {cap}, output size {len(stats.output)}",
    )
    return result


SUITES = {
    "exhaustive": exhaustive_suite,
    "oracle": oracle_suite,
    "placement": placement_suite,
    "adaptiveness": adaptiveness_suite,
    "budgets": budgets_suite,
}
