import numpy as np
import pytest
from hypothesis import given, strategies as st

from rifa.metrics import (
    MetricsSummary,
    evaluate,
    match_predictions,
    per_relation_recall,
    predicate_frequencies,
    property_recall,
    recall_at_k,
)
from rifa.scenedata import BBox, Entity, Scene, Triple, Vocab

import oracles

ON, NEAR, ABOVE, UNDER = 0, 1, 2, 3


def scene(m, triples, sid="s"):
    return Scene(sid, [Entity(0, BBox(0, 0, 0.5, 0.5))] * m, [Triple(*t) for t in triples])


def random_case(rng, m_max=5, n_pred=4):
    m = int(rng.integers(2, m_max + 1))
    cands = [(s, p, o) for s in range(m) for o in range(m) if s != o for p in range(n_pred)]
    n_gt = int(rng.integers(0, min(6, len(cands)) + 1))
    gt = [cands[i] for i in rng.choice(len(cands), size=n_gt, replace=False)]
    n_pred_list = int(rng.integers(0, len(cands) + 1))
    ranked = [cands[i] for i in rng.choice(len(cands), size=n_pred_list, replace=False)]
    return scene(m, sorted(set(gt))), ranked


def test_direction_matters():
    s = scene(2, [(0, ON, 1)])
    assert match_predictions([(0, ON, 1)], s, 5) == {Triple(0, ON, 1)}
    assert match_predictions([(1, ON, 0)], s, 5) == set()


def test_recall_ratio_and_extremes():
    s = scene(4, [(0, ON, 1), (1, ON, 2), (2, NEAR, 3), (3, ON, 0)])
    three = [(0, ON, 1), (1, ON, 2), (2, NEAR, 3), (0, NEAR, 2)]
    assert recall_at_k([three], [s], 20) == 75.0
    assert recall_at_k([list(s.triples)], [s], 20) == 100.0
    assert recall_at_k([[]], [s], 20) == 0.0


def test_cutoff_applies():
    s = scene(3, [(0, ON, 1)])
    ranked = [(1, ON, 2), (0, ON, 1)]
    assert recall_at_k([ranked], [s], 1) == 0.0
    assert recall_at_k([ranked], [s], 2) == 100.0


def test_recall_is_image_wise():
    a = scene(3, [(0, ON, 1)], "a")
    b = scene(3, [(0, ON, 1), (1, ON, 2), (2, ON, 0)], "b")
    # 100% and 0% average to 50 regardless of triple counts
    assert recall_at_k([[(0, ON, 1)], []], [a, b], 10) == 50.0


def test_out_of_range_prediction_rejected():
    with pytest.raises(IndexError):
        match_predictions([(0, ON, 7)], scene(2, [(0, ON, 1)]), 5)


def test_symmetric_and_asymmetric_definitions(small_vocab):
    s = scene(2, [(0, NEAR, 1)])
    assert property_recall([[(0, NEAR, 1), (1, NEAR, 0)]], [s], small_vocab, 5, "sym") == 100.0
    assert property_recall([[(0, NEAR, 1)]], [s], small_vocab, 5, "sym") == 0.0
    a = scene(2, [(0, ON, 1)])
    assert property_recall([[(0, ON, 1), (1, ON, 0)]], [a], small_vocab, 5, "asym") == 0.0
    assert property_recall([[(0, ON, 1)]], [a], small_vocab, 5, "asym") == 100.0


def test_inverse_definition(small_vocab):
    s = scene(2, [(0, ABOVE, 1), (1, UNDER, 0)])
    assert property_recall([[(0, ABOVE, 1), (1, UNDER, 0)]], [s], small_vocab, 5, "inv") == 100.0
    assert property_recall([[(0, ABOVE, 1)]], [s], small_vocab, 5, "inv") == 0.0
    assert property_recall([[(0, ABOVE, 1), (1, ABOVE, 0)]], [s], small_vocab, 5, "inv") == 0.0


def test_empty_group_is_none():
    v = Vocab(["c"], ["on"], asymmetric=[0])
    assert property_recall([[]], [scene(2, [(0, 0, 1)])], v, 5, "sym") is None
    assert property_recall([[]], [scene(2, [(0, 0, 1)])], v, 5, "inv") is None


def test_single_predicate_per_relation_equals_recall():
    rng = np.random.default_rng(3)
    scenes, ranked = zip(*(random_case(rng, n_pred=1) for _ in range(40)))
    table, mean = per_relation_recall(list(ranked), list(scenes), 1, 3)
    assert mean == pytest.approx(recall_at_k(list(ranked), list(scenes), 3))


def test_mean_is_unweighted():
    scenes_ = [scene(3, [(0, ON, 1)] + [(1, NEAR, 2)], f"s{i}") for i in range(99)]
    ranked = [[(0, ON, 1)]] * 99
    table, mean = per_relation_recall(ranked, scenes_, 4, 10)
    assert table == {ON: 100.0, NEAR: 0.0}
    assert mean == 50.0


@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_matches_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    vocab = Vocab(["c"], ["on", "near", "above", "under"], [ON], [NEAR], [(ABOVE, UNDER)])
    cases = [random_case(rng) for _ in range(int(rng.integers(1, 8)))]
    scenes_ = [s for s, _ in cases]
    ranked = [r for _, r in cases]
    gts = [[tuple(t) for t in s.triples] for s in scenes_]
    partners = {ABOVE: [UNDER], UNDER: [ABOVE]}

    assert recall_at_k(ranked, scenes_, k) == oracles.recall(ranked, gts, k)
    assert property_recall(ranked, scenes_, vocab, k, "asym") == oracles.property_recall(ranked, gts, k, {ON}, oracles.asym_rule)
    assert property_recall(ranked, scenes_, vocab, k, "sym") == oracles.property_recall(ranked, gts, k, {NEAR}, oracles.sym_rule)
    assert property_recall(ranked, scenes_, vocab, k, "inv") == oracles.property_recall(
        ranked, gts, k, {ABOVE, UNDER}, oracles.inv_rule(partners))
    assert per_relation_recall(ranked, scenes_, 4, k) == oracles.per_relation(ranked, gts, k, 4)


def test_frequencies():
    scenes_ = [scene(3, [(0, ON, 1), (1, ON, 2)]), scene(2, [(0, NEAR, 1)])]
    np.testing.assert_allclose(predicate_frequencies(scenes_, 4), [2 / 3, 1 / 3, 0, 0])
    np.testing.assert_allclose(predicate_frequencies([], 2), [0.5, 0.5])


def test_evaluate_summary_round_trip(small_vocab):
    s = scene(3, [(0, ON, 1), (1, NEAR, 2), (2, NEAR, 1)])
    summary = evaluate({"s": [(0, ON, 1), (1, NEAR, 2)]}, [s], small_vocab, [1, 2])
    assert summary.ks == [1, 2]
    assert summary.recall == {1: pytest.approx(100 / 3), 2: pytest.approx(200 / 3)}
    assert summary.inv == {1: None, 2: None}
    back = MetricsSummary.from_dict(summary.to_dict())
    assert back == summary
    assert "near" in summary.format_table()
    rows = summary.to_csv().splitlines()
    assert rows[0] == "k,predicate_id,predicate,recall" and len(rows) == 5
