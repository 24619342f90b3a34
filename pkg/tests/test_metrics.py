import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from rcfair.dataset import ScoredDataset
from rcfair.enforce import enforce_dp
from rcfair.metrics import (
    DP,
    EO,
    FALSE_POSITIVE_RATE,
    ONE_MINUS_PRECISION,
    Allocation,
    HarmSpec,
    UndefinedHarmError,
    auc,
    auc_from_arrays,
    fairness_gap,
    global_selection_rate,
    group_harm,
    harm_curve,
    metric_at_r,
    topk_default,
)


def test_topk_d1(d1):
    alloc = topk_default(d1, 4)
    assert sorted(d1.scores[alloc.selected_indices]) == [0.7, 0.8, 0.85, 0.9]
    assert alloc.counts == {"A": 3, "B": 1}


def test_topk_empty_and_full(d1):
    assert topk_default(d1, 0).counts == {"A": 0, "B": 0}
    assert topk_default(d1, 8).counts == {"A": 4, "B": 4}
    assert math.isinf(topk_default(d1, 0).thresholds["A"])


def test_metric_d1_default(d1):
    m = metric_at_r(d1, topk_default(d1, 4))
    assert (m.precision, m.recall, m.accuracy) == (0.75, 0.75, 0.75)


def test_metric_full_selection(d1):
    m = metric_at_r(d1, topk_default(d1, 8))
    assert m.recall == 1.0
    assert m.precision == 0.5


def test_metric_d1_dp(d1):
    alloc = Allocation.from_counts(d1, {"A": 2, "B": 2})
    assert sorted(d1.scores[alloc.selected_indices]) == [0.55, 0.8, 0.85, 0.9]
    assert metric_at_r(d1, alloc).precision == 0.5


def test_empty_precision_flagged(d1):
    m = metric_at_r(d1, topk_default(d1, 0))
    assert m.precision == 1.0 and not m.precision_defined


def test_group_harm_examples(d1):
    alloc = Allocation.from_counts(d1, {"A": 1, "B": 0})
    assert group_harm(d1, alloc, EO, "A") == 0.5
    full = topk_default(d1, 8)
    assert all(group_harm(d1, full, EO, g) == 0.0 for g in d1.groups)
    empty = topk_default(d1, 0)
    assert group_harm(d1, empty, DP, "A") == 1.0


def test_precision_harm_undefined_when_empty(d1):
    empty = topk_default(d1, 0)
    with pytest.raises(UndefinedHarmError):
        group_harm(d1, empty, HarmSpec(ONE_MINUS_PRECISION), "A")


def test_zero_positive_group_has_no_recall_harm():
    ds = ScoredDataset.from_arrays([0.9, 0.8, 0.1], [1, 0, 0], ["A", "B", "B"])
    assert group_harm(ds, topk_default(ds, 0), EO, "B") == 0.0


def test_fairness_gap_examples(d1):
    assert fairness_gap(d1, enforce_dp(d1, 4).allocation, DP) == 0.0
    assert fairness_gap(d1, topk_default(d1, 4), DP) == 0.5
    full = topk_default(d1, 8)
    assert fairness_gap(d1, full, DP) == 0.0 and fairness_gap(d1, full, EO) == 0.0


def test_harm_curve_fpr(d1):
    curve = harm_curve(d1, HarmSpec(FALSE_POSITIVE_RATE), "A")
    assert list(curve) == [0.0, 0.0, 0.5, 0.5, 1.0]


def test_auc_examples():
    assert auc_from_arrays([0.9, 0.8, 0.7], [1, 0, 1]) == 0.5
    assert auc_from_arrays([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc_from_arrays([0.3] * 4, [1, 0, 1, 0]) == 0.5


def test_auc_scope(d1):
    assert auc(d1, "A") == auc_from_arrays([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])


def _auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=30))
def test_auc_matches_pair_count(rows):
    scores = [s / 6 for s, _ in rows]
    labels = [int(y) for _, y in rows]
    if len(set(labels)) < 2:
        return
    assert auc_from_arrays(scores, labels) == pytest.approx(_auc_pairs(scores, labels))
    # invariant under a strictly increasing transform
    assert auc_from_arrays(np.sqrt(scores), labels) == pytest.approx(auc_from_arrays(scores, labels))


def test_global_selection_rate():
    assert global_selection_rate({"A": 0.5, "B": 0.5}, {"A": 0.5, "B": 0.5}) == 0.5
    assert global_selection_rate({"A": 0.75, "B": 0.25}, {"A": 0.5, "B": 0.5}) == 0.5
    assert global_selection_rate({"A": 1.0, "B": 0.0}, {"A": 0.3315, "B": 0.6685}) == pytest.approx(0.3315)
    with pytest.raises(KeyError):
        global_selection_rate({"A": 1.0}, {"B": 1.0})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 40))
def test_precision_fixes_recall_and_accuracy(seed, n):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n, 2)
    counts = {g: int(rng.integers(0, ds.group_size(g) + 1)) for g in ds.groups}
    alloc = Allocation.from_counts(ds, counts)
    m = metric_at_r(ds, alloc)
    r, p = alloc.budget, ds.total_positives
    if r == 0 or p == 0:
        return
    assert m.recall == pytest.approx(m.precision * r / p)
    assert m.accuracy == pytest.approx(1 - (r - m.precision * r + p - m.precision * r) / ds.n)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_topk_selected_count_and_recall_monotone(seed):
    ds = random_dataset(np.random.default_rng(seed), 25, 3, ties=True)
    recalls = []
    for k in range(ds.n + 1):
        m = metric_at_r(ds, topk_default(ds, k))
        assert m.selected == k
        recalls.append(m.recall)
    assert all(a <= b for a, b in zip(recalls, recalls[1:]))


def test_allocation_prefix_and_thresholds(d1):
    alloc = Allocation.from_counts(d1, {"A": 3, "B": 1})
    assert alloc.thresholds == {"A": 0.7, "B": 0.85}
    with pytest.raises(ValueError):
        Allocation.from_counts(d1, {"A": 5, "B": 0})
