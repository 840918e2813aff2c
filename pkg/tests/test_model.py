"""Ground truths, single comparisons, and the counter-based noise stream."""

import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roundrank.model import (
    ComparisonOutcome,
    ComparisonRequest,
    GroundTruth,
    InvalidParameter,
    NoiseCoordinates,
    NoiseModel,
    SelfComparison,
    compare,
    make_ground_truth,
    majority_wrong,
    true_sorted_topk,
    uniforms,
    wrong_counts,
)

seeds = st.integers(min_value=0, max_value=2**64 - 1)


def test_single_item_universe():
    for seed in (0, 1, 12345):
        assert make_ground_truth(1, seed).rank_of.tolist() == [1]


def test_same_seed_same_permutation():
    a, b = make_ground_truth(5, 77), make_ground_truth(5, 77)
    assert a.rank_of.tolist() == b.rank_of.tolist()


def test_permutations_of_three_are_uniform_over_seeds():
    counts = Counter(tuple(make_ground_truth(3, s).rank_of.tolist()) for s in range(10_000))
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / 10_000 - 1 / 6) < 0.02


@given(st.integers(min_value=1, max_value=200), seeds)
def test_ranks_form_a_permutation(n, seed):
    gt = make_ground_truth(n, seed)
    assert sorted(gt.rank_of.tolist()) == list(range(1, n + 1))


def test_rejects_empty_universe():
    with pytest.raises(InvalidParameter):
        make_ground_truth(0, 0)


def test_noiseless_comparison_follows_order():
    gt = GroundTruth(np.array([1, 5, 2, 3, 4]))
    out = compare(gt, NoiseModel.noiseless(), ComparisonRequest(0, 1), NoiseCoordinates(0, 1, 0))
    assert out.winner == 0


def _ordinal_with_u_near(target, run_seed=3, round_index=1):
    u = uniforms(run_seed, round_index, np.arange(10_000))
    return int(np.argmin(np.abs(u - target))), float(u[np.argmin(np.abs(u - target))])


def test_high_variate_flips_the_outcome():
    # u = 0.9 is above p = 2/3, so the worse item wins
    ordinal, u = _ordinal_with_u_near(0.9)
    assert abs(u - 0.9) < 1e-3
    gt = GroundTruth(np.array([1, 5, 2, 3, 4]))
    out = compare(gt, NoiseModel("bernoulli", 2 / 3), ComparisonRequest(0, 1), NoiseCoordinates(3, 1, ordinal))
    assert out.winner == 1


def test_low_variate_keeps_the_outcome():
    ordinal, _ = _ordinal_with_u_near(0.1)
    gt = GroundTruth(np.array([1, 5]))
    out = compare(gt, NoiseModel("bernoulli", 2 / 3), ComparisonRequest(1, 0), NoiseCoordinates(3, 1, ordinal))
    assert out.winner == 0


def test_marginal_frequency_of_correct_answers():
    u = uniforms(11, 1, np.arange(1_000_000))
    assert abs((u < 2 / 3).mean() - 2 / 3) < 0.002


def test_self_comparison_rejected():
    with pytest.raises(SelfComparison):
        ComparisonRequest(2, 2)
    gt = make_ground_truth(3, 0)
    with pytest.raises(SelfComparison):
        compare(gt, NoiseModel(), _raw_request(1, 1), NoiseCoordinates(0, 1))


def _raw_request(a, b):
    # bypasses the request's own check so compare() has to catch it
    req = object.__new__(ComparisonRequest)
    object.__setattr__(req, "a", a)
    object.__setattr__(req, "b", b)
    return req


def test_outcome_winner_must_be_a_participant():
    with pytest.raises(InvalidParameter):
        ComparisonOutcome(ComparisonRequest(0, 1), 2)


@pytest.mark.parametrize("p", [0.5, 0.2, 1.5])
def test_noise_probability_range(p):
    with pytest.raises(InvalidParameter):
        NoiseModel("bernoulli", p)


@given(seeds, st.integers(min_value=1, max_value=50), st.lists(st.integers(0, 2**40), min_size=1, max_size=30))
def test_variates_are_addressable(run_seed, round_index, ordinals):
    # drawing a subset gives the same numbers as drawing everything
    whole = uniforms(run_seed, round_index, np.array(ordinals))
    for i, o in enumerate(ordinals):
        assert uniforms(run_seed, round_index, [o])[0] == whole[i]
    assert ((whole >= 0) & (whole < 1)).all()


def test_rounds_and_seeds_give_different_streams():
    a = uniforms(1, 1, np.arange(100))
    assert not np.array_equal(a, uniforms(1, 2, np.arange(100)))
    assert not np.array_equal(a, uniforms(2, 1, np.arange(100)))


def test_true_sorted_topk_reads_the_permutation():
    gt = GroundTruth(np.array([3, 1, 4, 2]))
    assert true_sorted_topk(gt, 2) == [1, 3]
    assert true_sorted_topk(gt, 4) == [1, 3, 0, 2]


def test_true_sorted_topk_matches_a_rank_scan():
    gt = make_ground_truth(8, 2024)
    scan = [next(i for i in range(8) if gt.rank_of[i] == r) for r in range(1, 6)]
    assert true_sorted_topk(gt, 5) == scan


def test_padding_places_dummies_outside_the_real_order():
    gt = GroundTruth(np.array([2, 1, 3])).padded(2, 1)
    assert gt.n == 6 and gt.n_real == 3
    assert gt.rank_of.tolist() == [4, 3, 5, 1, 2, 6]
    assert true_sorted_topk(gt, 3) == [1, 0, 2]


@given(st.sampled_from([1, 3, 9, 221, 331]), st.floats(0.55, 0.95))
def test_majority_shortcut_agrees_with_counts(reps, p):
    u = uniforms(5, 1, np.arange(2000))
    wrong = wrong_counts(u, reps, p)
    assert np.array_equal(majority_wrong(u, reps, p), 2 * wrong > reps)
    assert wrong.min() >= 0 and wrong.max() <= reps


def test_binomial_inversion_matches_independent_flips():
    # mean and variance of the wrong count against reps separate single draws
    reps, p = 7, 2 / 3
    u = uniforms(9, 1, np.arange(200_000))
    grouped = wrong_counts(u, reps, p)
    rng = np.random.default_rng(0)
    flips = (rng.random((200_000, reps)) >= p).sum(axis=1)
    assert abs(grouped.mean() - flips.mean()) < 0.02
    assert abs(grouped.var() - flips.var()) < 0.03
    exact = {w: sum(1 for bits in itertools.product([0, 1], repeat=reps) if sum(bits) == w) * (1 - p) ** w * p ** (reps - w)
             for w in range(reps + 1)}
    freq = np.bincount(grouped, minlength=reps + 1) / len(grouped)
    for w, prob in exact.items():
        assert abs(freq[w] - prob) < 0.005
