import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgelift import DegenerateError, EdgeList, EdgeRecord, PermutationPlan, assign, relabel
from edgelift.contrasts import message_totals
from edgelift.permutation import (
    _Layout,
    _silent_split,
    null_distribution,
    permuted_totals,
    run_permutations,
    summarize_null,
    write_null_csv,
)
from edgelift.simulator import SimulationParams, simulate


def _edges(seed, n=14, k=50):
    rng = np.random.default_rng(seed)
    ids = rng.choice(10_000, n, replace=False)
    flags = rng.random(n) < 0.5
    recs = []
    for _ in range(k):
        s, d = rng.choice(n, 2, replace=False)
        recs.append(EdgeRecord(int(ids[s]), int(ids[d]), int(rng.integers(0, 6)),
                               bool(flags[s]), bool(flags[d])))
    return EdgeList.from_records(recs)


@pytest.mark.parametrize("mode", ["full", "sender", "recipient"])
def test_mode_contracts(mode):
    edges = _edges(3)
    plan = PermutationPlan(mode=mode, iterations=100, seed=9, p=0.5)
    for k in range(plan.iterations):
        view = relabel(edges, plan, k)
        assert np.array_equal(view.src, edges.src) and np.array_equal(view.msg, edges.msg)
        if mode == "sender":
            assert np.array_equal(view.dest_treated, edges.dest_treated)
        if mode == "recipient":
            assert np.array_equal(view.src_treated, edges.src_treated)


def test_full_mode_replaces_both_roles():
    edges = _edges(4)
    plan = PermutationPlan("full", 50, seed=1)
    changed_s = changed_d = False
    for k in range(plan.iterations):
        view = relabel(edges, plan, k)
        changed_s |= not np.array_equal(view.src_treated, edges.src_treated)
        changed_d |= not np.array_equal(view.dest_treated, edges.dest_treated)
    assert changed_s and changed_d


@pytest.mark.parametrize("mode", ["full", "sender", "recipient"])
def test_labels_consistent_and_hash_derived(mode):
    edges = _edges(5)
    plan = PermutationPlan(mode=mode, iterations=20, seed=123, p=0.4)
    for k in (0, 7, 19):
        view = relabel(edges, plan, k)
        if mode != "recipient":
            for m, f in zip(view.src.tolist(), view.src_treated.tolist()):
                assert f == assign(m, k, 123, 0.4)
        if mode != "sender":
            for m, f in zip(view.dest.tolist(), view.dest_treated.tolist()):
                assert f == assign(m, k, 123, 0.4)


def test_relabel_rejects_out_of_range_iteration():
    with pytest.raises(ValueError):
        relabel(_edges(1), PermutationPlan(iterations=5), 5)


def _oracle(edges, plan, sizes, k):
    """Brute-force totals for iteration k by relabeling and enumerating pairs."""
    view = relabel(edges, plan, k)
    layout = _Layout.build(edges, sizes)
    a, b = (int(x[0]) for x in _silent_split(layout, np.array([k]), plan))
    st_, sc = layout.silent_t, layout.silent_c
    new = [assign(int(m), k, plan.seed, plan.p) for m in layout.members]
    orig = layout.flags.tolist()
    send = list(new if plan.mode != "recipient" else orig)
    recv = list(new if plan.mode != "sender" else orig)
    # silent members as (new label, original label)
    silent = [(True, True)] * a + [(False, True)] * (st_ - a)
    silent += [(True, False)] * b + [(False, False)] * (sc - b)
    for nl, ol in silent:
        send.append(nl if plan.mode != "recipient" else ol)
        recv.append(nl if plan.mode != "sender" else ol)
    pairs = [0, 0, 0, 0]
    for i, j in itertools.permutations(range(len(send)), 2):
        pairs[2 * (not send[i]) + (not recv[j])] += 1
    return message_totals(view), tuple(pairs), (sum(send), len(send) - sum(send)), (
        sum(recv), len(recv) - sum(recv))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), mode=st.sampled_from(["full", "sender", "recipient"]),
       extra_t=st.integers(0, 3), extra_c=st.integers(0, 3))
def test_batch_matches_oracle(seed, mode, extra_t, extra_c):
    edges = _edges(seed)
    ids, flags = edges.members()
    sizes = (int(flags.sum()) + extra_t, int((~flags).sum()) + extra_c)
    plan = PermutationPlan(mode=mode, iterations=12, seed=seed, p=0.5)
    batch = permuted_totals(edges, plan, sizes)
    for k in range(plan.iterations):
        msgs, pairs, send_sizes, recv_sizes = _oracle(edges, plan, sizes, k)
        assert tuple(batch.messages[k]) == msgs
        assert tuple(batch.pairs[k]) == pairs
        assert tuple(batch.send_sizes[k]) == send_sizes
        assert tuple(batch.recv_sizes[k]) == recv_sizes


def test_deterministic_across_workers_and_chunks(monkeypatch):
    edges, truth = simulate(SimulationParams(n=300, p=0.5, lam=0.05, q1=0.2, seed=2))
    sizes = (truth.n_treated, truth.n_control)
    plan = PermutationPlan("full", 200, seed=5)
    stats = ["corrected_lift", "alpha_denominator", "send_lift"]
    ref = run_permutations(edges, stats, plan, sizes)
    import edgelift.permutation as perm

    monkeypatch.setattr(perm, "_CHUNK_CELLS", 300 * 7)
    other = run_permutations(edges, stats, plan, sizes, workers=3)
    for name in stats:
        assert np.array_equal(ref[name].null_values, other[name].null_values)
        assert ref[name].p_value == other[name].p_value


def test_label_invariant_statistic_has_p_one():
    edges = _edges(8)
    _, flags = edges.members()
    sizes = (int(flags.sum()), int((~flags).sum()))
    r = null_distribution(edges, "total_messages", PermutationPlan(iterations=200, seed=3), sizes)
    assert np.all(r.null_values == edges.total_messages)
    assert r.p_value == 1.0
    assert r.ci_low == r.ci_high == r.observed


def test_p_value_and_ci_definition():
    null = np.arange(-50.0, 50.0)  # mean -0.5
    plan = PermutationPlan(iterations=100, ci_level=0.9)
    r = summarize_null("x", 20.5, null, plan)
    extreme = np.count_nonzero(np.abs(null + 0.5) >= 21.0)
    assert r.p_value == (1 + extreme) / 101
    lo, hi = np.quantile(null + 0.5, [0.05, 0.95])
    assert (r.ci_low, r.ci_high) == (20.5 - hi, 20.5 - lo)


@given(st.lists(st.floats(-1e6, 1e6), min_size=5, max_size=60), st.floats(-1e6, 1e6))
def test_p_value_bounds(null, obs):
    r = summarize_null("x", obs, np.array(null), PermutationPlan(iterations=len(null)))
    assert 1 / (len(null) + 1) <= r.p_value <= 1.0


def test_too_many_undefined_iterations():
    null = np.r_[np.full(11, np.nan), np.zeros(89)]
    with pytest.raises(DegenerateError, match="11/100"):
        summarize_null("alpha", 0.1, null, PermutationPlan(iterations=100))
    r = summarize_null("alpha", 0.1, np.r_[null[1:], 0.0], PermutationPlan(iterations=100))
    assert r.undefined == 10


def test_strong_effect_is_significant():
    edges, truth = simulate(SimulationParams(n=2000, p=0.5, lam=0.02, q1=0.1, q2=0.1,
                                             alpha=0.3, seed=11))
    r = null_distribution(edges, "corrected_lift", PermutationPlan(iterations=500, seed=1),
                          (truth.n_treated, truth.n_control))
    assert r.p_value < 0.05 and r.ci_low > 0


def test_null_csv(tmp_path):
    edges = _edges(6)
    _, flags = edges.members()
    sizes = (int(flags.sum()), int((~flags).sum()))
    res = run_permutations(edges, ["total_messages", "tt_vs_cc"], PermutationPlan(iterations=30),
                           sizes)
    path = tmp_path / "null.csv"
    write_null_csv(res, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iteration", "total_messages", "tt_vs_cc"]
    assert len(rows) == 31
    assert [float(r[2]) for r in rows[1:]] == res["tt_vs_cc"].null_values.tolist()
