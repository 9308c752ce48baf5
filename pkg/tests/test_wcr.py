import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset

from clusterlevel.competing import nr_from_scores, nr_test
from clusterlevel.data import Dataset, build_layout
from clusterlevel.randomization import make_sign_group
from clusterlevel.regression import SubclusterScores
from clusterlevel.wcr import (
    DegenerateInstanceError,
    candidate_cutoffs,
    candidate_sign_vectors,
    compute_ratios,
    conservative_medians,
    prepare_scores,
    sup_pvalue_oracle,
    wcr_from_scores,
    wcr_test,
)


def layout_for(q_per_cluster):
    cl, sc = [], []
    for k, q in enumerate(q_per_cluster):
        for j in range(q):
            cl.append(f"k{k}")
            sc.append(f"k{k}j{j}")
    n = len(cl)
    return build_layout(Dataset(np.zeros(n), np.ones(n), np.empty((n, 0)), cl, sc))


def scores(num, den):
    num, den = np.asarray(num, float), np.asarray(den, float)
    return SubclusterScores(num, den, np.ones(num.size, dtype=int))


class TestRatios:
    def test_arithmetic(self):
        R, zero = compute_ratios(scores([2, -1], [4, 2]))
        assert R.tolist() == [0.5, -0.5]
        assert not zero.any()

    def test_zero_denominator_flagged(self):
        R, zero = compute_ratios(scores([0, 3, 1], [0, 1, 2]))
        assert zero.tolist() == [True, False, False]

    def test_all_zero_is_degenerate(self):
        with pytest.raises(DegenerateInstanceError):
            compute_ratios(scores([0, 0], [0, 0]))

    def test_rescaling(self):
        R, _ = compute_ratios(scores([2, -1, 4], [4, 2, 1]))
        R3, _ = compute_ratios(scores([6, -3, 12], [4, 2, 1]))
        np.testing.assert_allclose(R3, 3 * R)
        assert np.array_equal(np.argsort(R), np.argsort(R3))


class TestMedians:
    def test_even_cluster(self):
        assert conservative_medians(np.array([-5, -2, 1, 3.0]), layout_for([4])) == (1.0, -2.0)

    def test_odd_cluster(self):
        assert conservative_medians(np.array([-1, 0, 4.0]), layout_for([3])) == (0.0, 0.0)

    def test_max_over_clusters(self):
        # upper medians 1 and 5
        r_plus, _ = conservative_medians(np.array([0, 1, 2.0, 4, 5, 6]), layout_for([3, 3]))
        assert r_plus == 5.0

    def test_zero_set_left_out(self):
        R = np.array([-3.0, 0.0, 2.0])
        assert conservative_medians(R, layout_for([3]), np.array([False, True, False])) == (2.0, -3.0)

    def test_unsorted_input(self):
        assert conservative_medians(np.array([3, -5, 1, -2.0]), layout_for([4])) == (1.0, -2.0)


class TestCandidates:
    def test_two_clusters_window(self):
        # per-cluster medians: {2, -1} -> (2, -1), {3, -2} -> (3, -2); so R+ = 3, R- = -2
        R = np.array([2.0, -1.0, 3.0, -2.0])
        lay = layout_for([2, 2])
        zero = np.zeros(4, dtype=bool)
        r_plus, r_minus = conservative_medians(R, lay, zero)
        assert (r_plus, r_minus) == (3.0, -2.0)
        order, ms = candidate_cutoffs(R, zero, r_plus, r_minus)
        assert order.tolist() == [2, 0, 1, 3]
        assert ms.tolist() == [1, 2, 3, 4]
        cands = candidate_sign_vectors(R, zero, r_plus, r_minus, lay)
        assert cands[1].tolist() == [1, -1, 1, -1]

    def test_narrow_window(self):
        R = np.array([2.0, -1.0, 3.0, -2.0])
        zero = np.zeros(4, dtype=bool)
        _, ms = candidate_cutoffs(R, zero, 2.0, -1.0)
        assert ms.tolist() == [2, 3]

    def test_all_equal_single_candidate(self):
        R = np.full(5, 0.7)
        zero = np.zeros(5, dtype=bool)
        cands = candidate_sign_vectors(R, zero, 0.7, 0.7)
        assert len(cands) == 1 and cands[0].tolist() == [1] * 5

    def test_zero_set_entries_stay_zero(self):
        R = np.array([1.0, 0.0, -2.0, 0.5])
        zero = np.array([False, True, False, False])
        for c in candidate_sign_vectors(R, zero, 10, -10):
            assert c[1] == 0

    def test_ties_never_split(self):
        R = np.array([1.0, 1.0, 0.0, 1.0, -1.0])
        _, ms = candidate_cutoffs(R, np.zeros(5, dtype=bool), None, None)
        assert ms.tolist() == [0, 3, 4, 5]

    def test_genuine_zero_ratio_is_a_cutoff(self):
        R = np.array([0.0, 1.0])
        _, ms = candidate_cutoffs(R, np.zeros(2, dtype=bool), None, None)
        assert ms.tolist() == [0, 1, 2]


def test_r_equal_one_gives_p_one(rng):
    for q in (2, 3, 5, 12):
        ds = random_dataset(rng, 1, q, 15)
        assert wcr_test(ds, seed=1).p_value == 1.0
        assert sup_pvalue_oracle(ds, seed=1) == 1.0


def test_p_value_is_max_and_decision(small_ds):
    res = wcr_test(small_ds, alpha=0.1)
    assert res.p_value == max(c.p_value for c in res.per_cutoff)
    assert res.reject == (res.p_value <= 0.1)
    assert res.worst.p_value == res.p_value
    assert res.group_mode == "full" and res.B == 2**9


def test_candidates_monotone_along_sort(small_ds):
    res = wcr_test(small_ds, prune=False)
    order = np.argsort(-res.ratios, kind="stable")
    for c in res.per_cutoff:
        seq = c.signs[order]
        assert np.all(np.diff(seq.astype(int)) <= 0)


def test_zero_set_reported(rng):
    ds = random_dataset(rng, 2, 3, 10, d=2)
    x = ds.x.copy()
    rows = ds.subcluster_id == "C0S1"
    x[rows] = 2.0 * ds.w[rows, 1] - 1.0
    ds = Dataset(ds.y, x, ds.w, ds.cluster_id, ds.subcluster_id)
    res = wcr_test(ds)
    assert res.zero_set == ("C0S1",)
    j = res.subclusters.index("C0S1")
    assert all(c.signs[j] == 0 for c in res.per_cutoff)


def test_too_few_subclusters(rng):
    with pytest.raises(DegenerateInstanceError):
        wcr_test(random_dataset(rng, 1, 1, 10))


def test_seed_determinism_stochastic(rng):
    ds = random_dataset(rng, 3, 5, 10)
    a, b = wcr_test(ds, seed=4), wcr_test(ds, seed=4)
    assert a.group_mode == "stochastic" and a.p_value == b.p_value
    assert not a.pruned


def test_oracle_stochastic_mode(rng):
    for _ in range(10):
        ds = random_dataset(rng, 3, 4, 12, d=2)
        assert wcr_test(ds, B=300, seed=2).p_value == sup_pvalue_oracle(ds, B=300, seed=2)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_oracle_pruning_and_dominance(seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(2, 4))
    ds = random_dataset(rng, r, [int(rng.integers(2, 5)) for _ in range(r)], (5, 30),
                        d=int(rng.integers(0, 3)))
    res = wcr_test(ds, full_max=12)
    assert res.pruned
    layout, sc = prepare_scores(ds)
    group = make_sign_group(layout.q, full_max=12)
    unpruned = wcr_from_scores(sc, layout, group, prune=False)
    assert res.p_value == unpruned.p_value == sup_pvalue_oracle(ds, full_max=12)
    assert res.p_value >= nr_from_scores(sc, layout, group).p_value


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.1, 10.0))
def test_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 2, 3, 12, d=1)
    scaled = Dataset(c * ds.y, c * ds.x, ds.w, ds.cluster_id, ds.subcluster_id)
    assert wcr_test(ds).p_value == wcr_test(scaled).p_value


def test_nr_agrees_with_wrapper(small_ds):
    layout, sc = prepare_scores(small_ds)
    g = make_sign_group(layout.q)
    assert nr_test(small_ds).p_value == nr_from_scores(sc, layout, g).p_value
