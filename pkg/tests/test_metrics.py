"""Ranking metrics against brute-force oracles, plus the full evaluation path."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import records_from_rows, rng, zero_head
from scaa.metrics import (
    EvalReport,
    RankedList,
    UndefinedMetricError,
    auc,
    evaluate_all,
    f_at_k,
    format_report_table,
    precision_at_k,
    precision_at_k_strict,
    rank_candidates,
    recall_at_k,
)
from scaa.model import UserHistory, build_histories, new_model, predict_batch


# ------------------------------------------------------------------------ auc


def test_auc_perfect_ordering():
    assert auc([0.9, 0.3, 0.6], [1, 0, 1]) == 1.0


def test_auc_all_ties_is_half():
    assert auc([0.4, 0.4, 0.4, 0.4], [1, 0, 1, 0]) == 0.5


def test_auc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [0, 0])


def test_auc_input_validation():
    with pytest.raises(ValueError, match="equal 1-D"):
        auc([[0.1]], [1])
    with pytest.raises(ValueError, match="equal 1-D"):
        auc([0.1, 0.2], [1])
    with pytest.raises(ValueError, match="finite"):
        auc([np.nan, 0.2], [1, 0])


def test_auc_matches_pairwise_oracle_with_ties():
    for seed in range(200):
        g = np.random.default_rng(seed)
        n = int(g.integers(2, 13))
        labels = g.integers(0, 2, n)
        if labels.all() or not labels.any():
            labels[0], labels[-1] = 0, 1
        # quantized scores force tied pairs often
        scores = np.round(g.random(n) * 4) / 4
        want = oracles.auc_pairs(scores, labels)
        assert abs(auc(scores, labels) - want) < 1e-12


def test_auc_monotone_invariance():
    for seed in range(25):
        g = np.random.default_rng(seed)
        n = int(g.integers(2, 40))
        labels = g.integers(0, 2, n)
        if labels.all() or not labels.any():
            labels[0], labels[-1] = 0, 1
        scores = g.standard_normal(n)
        base = auc(scores, labels)
        assert abs(auc(3.0 * scores + 7.0, labels) - base) < 1e-12
        assert abs(auc(np.tanh(scores), labels) - base) < 1e-12
        assert abs(auc(np.exp(scores), labels) - base) < 1e-12


# ---------------------------------------------------------------- ranked list


def test_rank_candidates_orders_and_breaks_ties_by_item():
    rl = rank_candidates([3, 1, 2], [0.5, 0.9, 0.5], [False, True, False])
    assert [e[0] for e in rl.entries] == [1, 2, 3]
    assert rl.total_relevant == 1 and len(rl) == 3


def test_rank_candidates_validation():
    with pytest.raises(ValueError, match="lengths"):
        rank_candidates([1], [0.2, 0.3], [True])
    with pytest.raises(ValueError, match="finite"):
        rank_candidates([1], [np.inf], [True])


def test_precision_recall_examples():
    # top-2 holds 1 of 3 relevant items
    rl = rank_candidates(list(range(6)), [0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
                         [True, False, True, False, True, False])
    assert precision_at_k(rl, 2) == 0.5
    assert recall_at_k(rl, 2) == pytest.approx(1.0 / 3.0)
    # all relevant ranked first, k covers them
    rl = rank_candidates([0, 1, 2], [0.9, 0.8, 0.1], [True, True, False])
    assert recall_at_k(rl, 2) == 1.0


def test_precision_truncates_to_list_length():
    rl = rank_candidates([0, 1], [0.9, 0.8], [True, False])
    assert precision_at_k(rl, 50) == 0.5       # denominator min(50, 2) = 2
    assert precision_at_k_strict(rl, 50) == 1.0 / 50.0
    assert recall_at_k(rl, 50) == 1.0


def test_topk_validation():
    rl = rank_candidates([0], [0.5], [True])
    with pytest.raises(ValueError, match="k must be >= 1"):
        precision_at_k(rl, 0)
    with pytest.raises(UndefinedMetricError, match="empty"):
        precision_at_k(RankedList(()), 5)
    none_rel = rank_candidates([0], [0.5], [False])
    with pytest.raises(UndefinedMetricError, match="recall"):
        recall_at_k(none_rel, 5)


def test_f_at_k_reference_rows():
    # reported three-decimal F values truncate, rather than round, the exact
    # harmonic mean; the 2pr/(p+r) identities hold tighter than 1e-3
    assert f_at_k(0.390, 0.364) == pytest.approx(0.37655, abs=5e-6)
    assert f_at_k(0.385, 0.359) == pytest.approx(0.37155, abs=5e-6)
    assert f_at_k(0.355, 0.383) == pytest.approx(0.36847, abs=5e-6)


def test_f_at_k_basics():
    assert f_at_k(0.0, 0.0) == 0.0
    for p in (0.1, 0.5, 0.73):
        assert f_at_k(p, p) == pytest.approx(p, abs=1e-15)
    with pytest.raises(ValueError):
        f_at_k(-0.1, 0.5)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=30),
    st.integers(1, 60),
)
def test_topk_metric_ranges(entries, k):
    items = list(range(len(entries)))
    probs = [p for p, _ in entries]
    rel = [r for _, r in entries]
    rl = rank_candidates(items, probs, rel)
    p = precision_at_k(rl, k)
    assert 0.0 <= precision_at_k_strict(rl, k) <= p <= 1.0
    if any(rel):
        r = recall_at_k(rl, k)
        f = f_at_k(p, r)
        assert 0.0 <= r <= 1.0 and 0.0 <= f <= 1.0
        if p > 0 and r > 0:
            assert min(p, r) <= f <= max(p, r)


# --------------------------------------------------------------- evaluate_all


def eval_model(n_items=80, d=4, seed=0, **kw):
    return new_model([f"i{j}" for j in range(n_items)], d=d, seed_rng=rng(seed), **kw)


def exposure_rows(user, items, clicked, t0=0):
    return [(user, it, 1 if it in clicked else 0, 0, 0, t0 + j) for j, it in enumerate(items)]


def test_evaluate_single_user_sixty_candidates():
    # all-equal scores rank by item id; item 0 is the lone positive, so it
    # lands first: P@50 hits 1 of 50, R@50 finds the only relevant item
    model = zero_head(eval_model())
    rows = exposure_rows(0, list(range(60)), {0})
    rep = evaluate_all(model, records_from_rows(rows), {0: UserHistory()}, k=50)
    assert rep.precision == pytest.approx(1.0 / 50.0)
    assert rep.recall == 1.0
    assert rep.precision_strict == pytest.approx(1.0 / 50.0)
    assert rep.auc == 0.5  # every score tied
    assert rep.n_scored == 60 and rep.n_ranked_users == 1


def test_evaluate_identical_users_macro_equals_single():
    model = eval_model(seed=3)
    items = [5, 9, 13, 2, 40]
    one = records_from_rows(exposure_rows(0, items, {9, 2}))
    two = records_from_rows(exposure_rows(0, items, {9, 2}) + exposure_rows(1, items, {9, 2}))
    h = {0: UserHistory(clicked=(1, 3)), 1: UserHistory(clicked=(1, 3))}
    rep1 = evaluate_all(model, one, h, k=3)
    rep2 = evaluate_all(model, two, h, k=3)
    for f in ("precision", "recall", "f1", "precision_strict", "auc"):
        assert getattr(rep2, f) == pytest.approx(getattr(rep1, f), abs=1e-15)


def test_evaluate_matches_straight_line_oracle():
    for seed in range(10):
        g = np.random.default_rng(seed)
        model = eval_model(seed=seed + 50)
        rows, histories = [], {}
        for u in range(5):
            items = g.choice(80, size=g.integers(3, 9), replace=False)
            clicked = {int(i) for i in items[: g.integers(1, len(items))]}
            rows += exposure_rows(u, [int(i) for i in items], clicked)
            hist_items = tuple(int(x) for x in g.choice(80, size=3, replace=False))
            histories[u] = UserHistory(
                clicked=hist_items, liked=hist_items[:2], followed=hist_items[2:]
            )
        records = records_from_rows(rows)
        k = int(g.integers(1, 8))
        rep = evaluate_all(model, records, histories, k=k)

        per_user = []
        for u in range(5):
            mine = [r for r in records if r.user == u]
            probs = predict_batch(model, [(histories[u], r.item) for r in mine])
            per_user.append(([r.item for r in mine], list(probs), [r.click for r in mine]))
        want = oracles.evaluate_scalar(per_user, k)
        assert rep.auc == want["auc"]
        assert rep.precision == want["precision"]
        assert rep.recall == want["recall"]
        assert rep.f1 == want["f1"]
        assert rep.precision_strict == want["precision_strict"]
        assert rep.n_scored == want["n_scored"]
        assert rep.n_ranked_users == want["n_ranked_users"]


def test_evaluate_threads_match_serial():
    g = np.random.default_rng(33)
    model = eval_model(seed=4)
    rows, histories = [], {}
    for u in range(6):
        items = [int(i) for i in g.choice(80, size=7, replace=False)]
        rows += exposure_rows(u, items, set(items[:2]))
        histories[u] = UserHistory(clicked=(u,), liked=(u,), followed=(u + 1,))
    records = records_from_rows(rows)
    serial = evaluate_all(model, records, histories, k=5, threads=1)
    threaded = evaluate_all(model, records, histories, k=5, threads=4)
    assert serial == threaded


def test_evaluate_missing_history_counts_as_empty():
    model = eval_model(seed=6)
    rows = records_from_rows(exposure_rows(0, [1, 2, 3], {2}))
    a = evaluate_all(model, rows, {}, k=2)
    b = evaluate_all(model, rows, {0: UserHistory()}, k=2)
    assert a == b


def test_evaluate_degenerate_inputs():
    model = eval_model()
    with pytest.raises(UndefinedMetricError, match="empty test"):
        evaluate_all(model, [], {}, k=5)
    no_clicks = records_from_rows(exposure_rows(0, [1, 2], set()))
    with pytest.raises(UndefinedMetricError):
        evaluate_all(model, no_clicks, {}, k=5)


def test_evaluate_macro_between_user_extremes():
    model = zero_head(eval_model())
    # user 0 ranks its positive first (item id order), user 1 ranks it last
    rows = exposure_rows(0, [0, 1, 2, 3], {0}) + exposure_rows(1, [0, 1, 2, 3], {3})
    rep = evaluate_all(model, records_from_rows(rows), {}, k=2)
    per_user_p = [0.5, 0.0]  # each user: one positive, top-2 by item id
    assert min(per_user_p) <= rep.precision <= max(per_user_p)
    assert rep.precision == pytest.approx(sum(per_user_p) / 2)


# ------------------------------------------------------------------ reporting


def test_eval_report_json_sorted():
    rep = EvalReport(50, 0.7, 0.6, 0.5, 0.55, 0.4, 100, 10)
    data = json.loads(rep.to_json())
    assert list(data) == sorted(data)
    assert data["k"] == 50 and data["auc"] == 0.7


def test_format_report_table():
    rep = EvalReport(50, 0.71234, 0.6, 0.5, 0.55, 0.4, 100, 10)
    table = format_report_table([("SCAA", rep)], k=50)
    lines = table.splitlines()
    assert "AUC" in lines[0] and "R@50" in lines[0]
    assert lines[1].startswith("SCAA")
    assert "0.712" in lines[1]
