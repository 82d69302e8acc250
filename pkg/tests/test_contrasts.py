import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgelift import ClassTotals, DegenerateError, EdgeList, EdgeRecord, class_totals, normalized_contrasts
from edgelift.contrasts import class_values


def test_e1_totals(e1_edges):
    t = class_totals(e1_edges, (2, 2))
    assert t.messages == (3, 2, 1, 5)
    assert t.pairs == (2, 4, 4, 2)


def test_e1_realized_rates(e1_edges):
    c = normalized_contrasts(class_totals(e1_edges, (2, 2)), 0.5, "realized")
    assert c.values == (1.5, 0.5, 0.25, 2.5)
    assert c.response_contrast == 0.25 - 2.5
    assert c.placebo_spread == 2.5 - 0.25


def test_e1_expected_affinity(e1_edges):
    c = normalized_contrasts(class_totals(e1_edges, (2, 2)), 0.5, "expected")
    assert c.affinity_contrast == 3 - 0.5 * (2 + 1)
    assert c.values == (3.0, 2.0, 1.0, 5.0)


def test_expected_weights_at_uneven_p():
    t = ClassTotals.from_sizes((9, 6, 3, 4), 10, 10)
    tt, tc, ct, cc = class_values(t, 0.75, "expected")
    r = 0.25 / 0.75
    assert (tt, tc, ct, cc) == pytest.approx((9 * r * r, 6 * r, 3 * r, 4))


def test_silent_members_give_zero_rates():
    t = class_totals(EdgeList.empty(), (10, 10))
    assert t.messages == (0, 0, 0, 0)
    assert t.pairs == (90, 100, 100, 90)
    assert normalized_contrasts(t, 0.5).values == (0.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize("sizes", [(1, 5), (5, 0), (0, 0)])
def test_zero_pair_class_is_degenerate(sizes):
    with pytest.raises(DegenerateError):
        class_totals(EdgeList.empty(), sizes)


def _random_edges(seed, n=12, k=40):
    rng = np.random.default_rng(seed)
    flags = rng.random(n) < 0.5
    flags[:2] = True
    flags[2:4] = False
    recs = []
    for _ in range(k):
        s, d = rng.choice(n, 2, replace=False)
        recs.append(EdgeRecord(int(s), int(d), int(rng.integers(0, 9)), bool(flags[s]), bool(flags[d])))
    return EdgeList.from_records(recs), (int(flags.sum()), int((~flags).sum())), recs


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.integers(1, 5))
def test_totals_linear_in_counts(seed, k):
    edges, sizes, _ = _random_edges(seed)
    assert class_totals(edges.scaled(k), sizes).messages == tuple(
        k * m for m in class_totals(edges, sizes).messages
    )


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_order_independent(seed):
    edges, sizes, recs = _random_edges(seed)
    rng = np.random.default_rng(seed + 1)
    shuffled = [recs[i] for i in rng.permutation(len(recs))]
    assert class_totals(EdgeList.from_records(shuffled), sizes) == class_totals(edges, sizes)


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_label_swap(seed):
    edges, sizes, recs = _random_edges(seed)
    flipped = EdgeList.from_records(
        [EdgeRecord(r.src, r.dest, r.msg, not r.src_treated, not r.dest_treated) for r in recs]
    )
    assert class_totals(flipped, sizes[::-1]) == class_totals(edges, sizes).swapped()


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_totals_add_up(seed):
    edges, sizes, _ = _random_edges(seed)
    t = class_totals(edges, sizes)
    assert t.total_messages == edges.total_messages
    n = sum(sizes)
    assert sum(t.pairs) == n * (n - 1)
