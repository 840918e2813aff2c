"""Noiseless sorting and sorted top-k: counts, partitions, dispatch, and exactness."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roundrank import noiseless as nl
from roundrank.harness import execute
from roundrank.model import GroundTruth, InvalidParameter, NoiseModel, make_ground_truth, true_sorted_topk
from roundrank.verify import exhaustive_small_check

NOISELESS = NoiseModel.noiseless()


def run(alg, gt):
    return execute(alg, gt, NOISELESS)


# -- one-round all pairs ------------------------------------------------------


def test_one_round_uses_every_pair_once():
    stats = run(nl.one_round_sorted_topk(5, 3), make_ground_truth(5, 8))
    assert stats.total_comparisons == 10


def test_one_round_single_item():
    stats = run(nl.one_round_sorted_topk(1, 1), make_ground_truth(1, 0))
    assert stats.total_comparisons == 0 and stats.output == [0]


def test_one_round_exhaustive_up_to_six():
    rep = exhaustive_small_check(lambda n, k, s: nl.one_round_sorted_topk(n, k, s), 6)
    assert rep.passed
    assert rep.cases == 3 * sum(math.factorial(n) * n for n in range(1, 7))


@pytest.mark.parametrize("n,k", [(0, 1), (5, 0), (5, 6)])
def test_bad_k_rejected(n, k):
    with pytest.raises(InvalidParameter):
        nl.one_round_sorted_topk(n, k)


# -- r-round sort -------------------------------------------------------------


def test_single_round_sort_of_six():
    gt = make_ground_truth(6, 5)
    stats = run(nl.r_round_sort(6, 1), gt)
    assert stats.total_comparisons == 15
    assert stats.output == true_sorted_topk(gt, 6)


def test_sorting_one_item_is_free():
    assert run(nl.r_round_sort(1, 3), make_ground_truth(1, 0)).total_comparisons == 0


@given(st.integers(2, 300), st.integers(1, 4), st.integers(0, 2**32))
def test_r_round_sort_sorts_within_r_rounds(n, r, seed):
    gt = make_ground_truth(n, seed)
    stats = run(nl.r_round_sort(n, r, seed), gt)
    assert stats.output == true_sorted_topk(gt, n)
    assert stats.rounds_used <= r


def test_more_rounds_do_not_cost_more_on_average():
    n, trials = 1024, 20
    means = []
    for r in (1, 2, 3):
        means.append(np.mean([run(nl.r_round_sort(n, r, s), make_ground_truth(n, s)).total_comparisons for s in range(trials)]))
    assert means[0] > means[1] > means[2]


# -- pivot partitions ---------------------------------------------------------


def _partition_from_ranks(ranks, pivot_ranks, k=None):
    ranks = np.asarray(ranks)
    items = np.arange(len(ranks))
    pivots = np.array([int(np.flatnonzero(ranks == r)[0]) for r in pivot_ranks], dtype=np.int64)
    beats = ranks[pivots][None, :] < ranks[:, None]
    return nl.partition_by_pivots(items, pivots, beats, k)


def test_partition_hand_example():
    ranks = np.arange(1, 11)
    part = _partition_from_ranks(ranks, [3, 7], k=5)
    chunk_ranks = [sorted(ranks[c].tolist()) for c in part.chunks]
    assert chunk_ranks == [[1, 2], [4, 5, 6], [8, 9, 10]]
    assert part.l == 2
    assert part.pivot_ranks.tolist() == [3, 7]


def test_partition_without_pivots():
    part = nl.partition_by_pivots(np.arange(4), np.zeros(0, dtype=np.int64), np.zeros((4, 0), dtype=bool), 2)
    assert len(part.chunks) == 1 and part.chunks[0].tolist() == [0, 1, 2, 3]
    assert part.l == 1


@given(st.permutations(list(range(1, 10))), st.integers(1, 9))
def test_partition_matches_rank_filtering(perm, k):
    ranks = np.array(perm)
    part = _partition_from_ranks(ranks, [2, 5, 8], k)
    bounds = [0, 2, 5, 8, 10]
    for c, (lo, hi) in zip(part.chunks, zip(bounds, bounds[1:])):
        assert sorted(ranks[c].tolist()) == list(range(lo + 1, hi))
    assert part.l == next(i + 1 for i, r in enumerate([2, 5, 8]) if r >= k) if k <= 8 else part.l == 4


def test_inconsistent_outcomes_are_reported():
    items = np.arange(3)
    pivots = np.array([0, 1])
    beats = np.array([[False, True], [True, False], [False, False]])  # 0 and 1 beat each other
    with pytest.raises(nl.PartitionInconsistency):
        nl.partition_by_pivots(items, pivots, beats)


# -- rsorted1 -----------------------------------------------------------------


def test_alpha_and_first_round_size():
    n = 4096
    assert nl.alpha_for(n, n, 2) == 64
    alg = nl.rsorted1(n, n, 2, seed=0)
    stats = run(alg, make_ground_truth(n, 0))
    s = len(alg.trace["partition"].pivots)
    # pivots are drawn with repetition, so s <= alpha distinct pivots meet the n - s others and each other
    assert s <= 64
    assert stats.comparisons_per_round[0] == s * (n - s) + s * (s - 1) // 2
    assert abs(stats.comparisons_per_round[0] - 64 * n) / (64 * n) < 0.05


@given(st.integers(2, 400), st.data())
def test_rsorted1_is_exact(n, data):
    k = data.draw(st.integers(1, n))
    r = data.draw(st.integers(2, 4))
    seed = data.draw(st.integers(0, 2**32))
    gt = make_ground_truth(n, seed + 1)
    stats = run(nl.rsorted1(n, k, r, seed), gt)
    assert stats.output == true_sorted_topk(gt, k)
    assert stats.rounds_used <= r


def test_rsorted1_exhaustive_small():
    for r in (2, 3):
        assert exhaustive_small_check(lambda n, k, s: nl.rsorted1(n, k, r, s), 6).passed


# -- approximate quantiles ----------------------------------------------------


def test_full_sample_gives_exact_median():
    n = 101
    gt = make_ground_truth(n, 3)
    alg = nl.approx_quantile_pivots(n, 1, [51], budget=n * n, seed=2)
    quant = run(alg, gt).output
    assert quant.sample_size == n
    assert gt.rank_of[quant.pivots[0]] == 51


def test_quantile_pivots_stay_within_tolerance():
    n, budget, trials = 10_000, 10**6, 2000
    within = 0
    for s in range(trials):
        gt = make_ground_truth(n, s)
        quant = execute(nl.approx_quantile_pivots(n, 1, [n / 2], budget, seed=s), gt, NOISELESS,
                        keep_transcript=False).output
        assert quant.sample_size == 1000
        within += abs(int(gt.rank_of[quant.pivots[0]]) - n / 2) <= quant.tolerance
    assert within / trials >= 0.999


def test_quantile_target_count():
    n, k, r = 512, 64, 3
    alpha = nl.alpha_for(n, k, r)
    targets = np.arange(1, alpha * alpha + 2) * (k / alpha**2)
    quant = run(nl.approx_quantile_pivots(n, alpha, targets, budget=n * 20, seed=0), make_ground_truth(n, 0)).output
    assert len(quant.pivots) == alpha * alpha + 1


def test_quantiles_need_budget_at_least_n():
    with pytest.raises(nl.InsufficientBudget):
        nl.approx_quantile_pivots(100, 2, [50], budget=99)


# -- rsorted2 -----------------------------------------------------------------


def test_forced_fail_falls_back_to_all_pairs():
    n, k, r, seed = 4096, 700, 3, 5
    probe = nl.rsorted2(n, k, r, seed)
    run(probe, make_ground_truth(n, 0))
    probes = probe.state.S
    alpha = probe.alpha
    # every probe gets a rank above 3n/alpha, so no probe lands in the window
    others = np.setdiff1d(np.arange(n), probes)
    ranks = np.empty(n, dtype=np.int64)
    ranks[others] = np.arange(1, len(others) + 1)
    ranks[probes] = np.arange(len(others) + 1, n + 1)
    assert alpha == 5
    assert ranks[probes].min() > 3 * n / alpha
    gt = GroundTruth(ranks)
    alg = nl.rsorted2(n, k, r, seed)
    stats = run(alg, gt)
    assert alg.state.fail
    assert stats.output == true_sorted_topk(gt, k)
    assert stats.comparisons_per_round[-1] == n * (n - 1) // 2


@given(st.integers(2, 400), st.data())
def test_rsorted2_is_exact(n, data):
    k = data.draw(st.integers(1, n))
    r = data.draw(st.integers(3, 5))
    seed = data.draw(st.integers(0, 2**32))
    gt = make_ground_truth(n, seed ^ 0x5A5A)
    alg = nl.rsorted2(n, k, r, seed)
    stats = run(alg, gt)
    assert stats.output == true_sorted_topk(gt, k)
    assert stats.rounds_used <= r


def test_rsorted2_exhaustive_remaining_seeds():
    # seeds 0..2 run in the acceptance suite; together these make five
    rep = exhaustive_small_check(lambda n, k, s: nl.rsorted2(n, k, 3, s), 8, seeds=(3, 4))
    assert rep.passed, rep.failures[:1]


def test_rsorted2_fail_rate_at_4096():
    n, k, r, trials = 4096, 256, 3, 200
    fails = 0
    for s in range(trials):
        alg = nl.rsorted2(n, k, r, s)
        gt = make_ground_truth(n, 10_000 + s)
        stats = execute(alg, gt, NOISELESS, keep_transcript=False)
        assert stats.output == true_sorted_topk(gt, k)
        fails += alg.state.fail
    assert fails / trials <= 0.05


# -- dispatcher ---------------------------------------------------------------


def test_two_rounds_small_k_inflates_to_n_two_thirds():
    assert nl.dispatch_branch(1000, 10, 2) == ("rsorted1", 100)
    gt = make_ground_truth(1000, 1)
    stats = run(nl.noiseless_sorted_topk(1000, 10, 2, seed=1), gt)
    assert stats.output == true_sorted_topk(gt, 10)


def test_single_round_dispatch_is_all_pairs():
    stats = run(nl.noiseless_sorted_topk(40, 7, 1), make_ground_truth(40, 2))
    assert stats.total_comparisons == 40 * 39 // 2


def test_three_round_dispatch_ranges():
    n = 4096
    hi = n ** (4 / 5)  # above this, rsorted1
    lo = math.ceil(10 * n ** (1 / 2))  # below this, rsorted2 on an inflated k
    assert lo == 640 and 776 < hi < 777
    assert nl.dispatch_branch(n, 3000, 3) == ("rsorted1", 3000)
    assert nl.dispatch_branch(n, 700, 3) == ("rsorted2", 700)
    assert nl.dispatch_branch(n, 100, 3) == ("rsorted2", 640)


def test_middle_range_is_empty_at_512():
    n = 512
    assert math.ceil(10 * n ** 0.5) > n ** 0.8
    for k in range(1, n + 1):
        branch, inner = nl.dispatch_branch(n, k, 3)
        if k > n**0.8:
            assert (branch, inner) == ("rsorted1", k)
        else:
            assert (branch, inner) == ("rsorted2", 227)
