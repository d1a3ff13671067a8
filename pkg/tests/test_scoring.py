import numpy as np
import pytest
from hypothesis import given, strategies as st

from rifa.scoring import load_predictions, rank_triples, relation_score, save_predictions


def test_relation_score_substitution():
    assert relation_score(0.8, 0.5, 0.3, 120) == pytest.approx(9.8)
    assert relation_score(-0.4, 0.9, 0.0, 120) == -0.4


def test_relation_score_without_possibility():
    assert relation_score(0.2, 0.1, 0.5, 10, use_rp=False) == pytest.approx(5.2)


def test_single_pair_single_best():
    got = rank_triples("x", np.array([[2, 5]]), np.array([0.0]), np.array([1.0]), np.array([[0.9, 0.1]]), beta=1, k=1)
    assert [(t.s, t.o, t.p) for t in got.triples] == [(2, 5, 0)]
    assert got.triples[0].rs == pytest.approx(0.9)
    assert got.top(1) == [(2, 0, 5)]


def test_ties_by_subject_object_predicate():
    pairs = np.array([[1, 0], [0, 2], [0, 1]])
    rc = np.full((3, 2), 0.5)
    got = rank_triples("x", pairs, np.zeros(3), np.ones(3), rc, beta=1)
    assert [(t.s, t.o, t.p) for t in got.triples] == [
        (0, 1, 0), (0, 1, 1), (0, 2, 0), (0, 2, 1), (1, 0, 0), (1, 0, 1)
    ]


def test_multi_relation_pair_yields_two_triples():
    # two plausible predicates on one pair both reach the top
    pairs = np.array([[0, 1], [1, 0]])
    rc = np.array([[0.48, 0.47, 0.05], [0.34, 0.33, 0.33]])
    rp = np.array([0.95, 0.2])
    got = rank_triples("x", pairs, np.array([0.5, -0.5]), rp, rc, beta=120, k=2)
    assert got.top(2) == [(0, 0, 1), (0, 1, 1)]


def test_empty_inputs():
    got = rank_triples("x", np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros((0, 3)), beta=1)
    assert got.triples == []


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 5), st.integers(1, 40))
def test_ranking_matches_sorted_oracle(seed, n_pairs, n_pred, k):
    rng = np.random.default_rng(seed)
    pairs = rng.integers(0, 6, size=(n_pairs, 2))
    pairs = np.unique(pairs, axis=0)
    sc = np.round(rng.uniform(-1, 1, len(pairs)), 1)
    rp = np.round(rng.uniform(0, 1, len(pairs)), 1)
    rc = np.round(rng.dirichlet(np.ones(n_pred), size=len(pairs)), 1)
    cands = []
    for r, (s, o) in enumerate(pairs):
        for p in range(n_pred):
            cands.append((sc[r] + 120 * rp[r] * rp[r] * rc[r, p], int(s), int(o), p))
    expected = [(s, o, p) for _, s, o, p in sorted(cands, key=lambda c: (-c[0], c[1], c[2], c[3]))][:k]
    got = rank_triples("x", pairs, sc, rp, rc, beta=120, k=k)
    assert [(t.s, t.o, t.p) for t in got.triples] == expected


def test_predictions_round_trip(tmp_path):
    a = rank_triples("a", np.array([[0, 1]]), np.array([0.3]), np.array([0.7]), np.array([[0.2, 0.8]]), beta=120)
    b = rank_triples("b", np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros((0, 2)), beta=120)
    save_predictions([a, b], tmp_path / "p.jsonl")
    back = load_predictions(tmp_path / "p.jsonl")
    assert back[0] == a and back[1] == b
    save_predictions(back, tmp_path / "q.jsonl")
    assert (tmp_path / "p.jsonl").read_bytes() == (tmp_path / "q.jsonl").read_bytes()


def test_bad_prediction_file_names_line(tmp_path):
    (tmp_path / "p.jsonl").write_text('{"scene_id": "a", "triples": []}\n{"scene_id": "b"}\n')
    with pytest.raises(ValueError, match=":2:"):
        load_predictions(tmp_path / "p.jsonl")
