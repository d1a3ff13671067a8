import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rifa.scenedata import (
    BBox,
    DatasetError,
    Entity,
    RunConfig,
    Scene,
    Triple,
    Vocab,
    load_dataset,
    one_hot,
    save_dataset,
    validate_bbox,
)

from conftest import random_scene


def write_lines(path, objs):
    path.write_text("\n".join(json.dumps(o) for o in objs) + "\n")


VOCAB = {"categories": ["a", "b"], "predicates": ["on"], "asymmetric": [0], "symmetric": [], "inverse": []}


def test_one_scene_two_entities(tmp_path):
    path = tmp_path / "d.jsonl"
    write_lines(path, [
        {"vocab": VOCAB},
        {"scene_id": "x", "entities": [
            {"category": 0, "bbox": [0.1, 0.1, 0.3, 0.3]},
            {"category": 1, "bbox": [0.2, 0.2, 0.5, 0.6]},
        ], "triples": [[0, 0, 1]]},
    ])
    scenes, vocab = load_dataset(path)
    assert len(scenes) == 1 and scenes[0].m == 2
    assert scenes[0].triples == [Triple(0, 0, 1)]
    assert vocab.predicates == ["on"]


def test_self_relation_names_scene(tmp_path):
    path = tmp_path / "d.jsonl"
    write_lines(path, [
        {"vocab": VOCAB},
        {"scene_id": "bad-one", "entities": [{"category": 0, "bbox": [0.1, 0.1, 0.3, 0.3]}], "triples": [[0, 0, 0]]},
    ])
    with pytest.raises(DatasetError, match="bad-one") as info:
        load_dataset(path)
    assert ":2:" in str(info.value)


@pytest.mark.parametrize("scene, fragment", [
    ({"scene_id": "e", "entities": [], "triples": []}, "non-empty"),
    ({"scene_id": "c", "entities": [{"category": 5, "bbox": [0.1, 0.1, 0.2, 0.2]}], "triples": []}, "category"),
    ({"scene_id": "b", "entities": [{"category": 0, "bbox": [0.3, 0.1, 0.2, 0.2]}], "triples": []}, "degenerate"),
    ({"scene_id": "o", "entities": [{"category": 0, "bbox": [0.1, 0.1, 1.2, 0.2]}], "triples": []}, "outside"),
    ({"scene_id": "p", "entities": [{"category": 0, "bbox": [0.1, 0.1, 0.2, 0.2]},
                                    {"category": 0, "bbox": [0.1, 0.1, 0.2, 0.2]}], "triples": [[0, 3, 1]]}, "predicate"),
    ({"scene_id": "d", "entities": [{"category": 0, "bbox": [0.1, 0.1, 0.2, 0.2]},
                                    {"category": 0, "bbox": [0.1, 0.1, 0.2, 0.2]}], "triples": [[0, 0, 1], [0, 0, 1]]}, "duplicated"),
    ({"scene_id": "m", "entities": [{"category": 0, "bbox": [0.1, 0.1, 0.2, 0.2]}], "triples": [[0, 0, 4]]}, "missing entity"),
])
def test_invalid_scenes_rejected(tmp_path, scene, fragment):
    path = tmp_path / "d.jsonl"
    write_lines(path, [{"vocab": VOCAB}, scene])
    with pytest.raises(DatasetError, match=fragment):
        load_dataset(path)


def test_feature_length_must_be_consistent(tmp_path):
    path = tmp_path / "d.jsonl"
    write_lines(path, [
        {"vocab": VOCAB},
        {"scene_id": "a", "entities": [{"category": 0, "bbox": [0.1, 0.1, 0.2, 0.2], "feature": [1, 2]}], "triples": []},
        {"scene_id": "b", "entities": [{"category": 0, "bbox": [0.1, 0.1, 0.2, 0.2], "feature": [1, 2, 3]}], "triples": []},
    ])
    with pytest.raises(DatasetError, match="expected 2"):
        load_dataset(path)


def test_missing_file_and_bad_header(tmp_path):
    with pytest.raises(DatasetError, match="cannot read"):
        load_dataset(tmp_path / "nope.jsonl")
    path = tmp_path / "d.jsonl"
    path.write_text('{"scenes": []}\n')
    with pytest.raises(DatasetError, match=":1:"):
        load_dataset(path)


def test_empty_triple_list_round_trip(tmp_path, small_vocab):
    scene = Scene("solo", [Entity(1, BBox(0.1, 0.2, 0.3, 0.4))], [])
    save_dataset([scene], small_vocab, tmp_path / "d.jsonl")
    scenes, _ = load_dataset(tmp_path / "d.jsonl")
    assert scenes[0].triples == [] and scenes[0].m == 1


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.booleans())
def test_save_load_save_is_byte_identical(tmp_path_factory, seed, n_scenes, with_features):
    rng = np.random.default_rng(seed)
    vocab = Vocab(["a", "b", "c"], ["on", "near", "above", "under"], [0], [1], [(2, 3)])
    scenes = [
        random_scene(rng, int(rng.integers(1, 6)), 4, 3, feature_dim=3 if with_features else None, scene_id=f"s{i}")
        for i in range(n_scenes)
    ]
    d = tmp_path_factory.mktemp("rt")
    save_dataset(scenes, vocab, d / "a.jsonl", meta={"note": "x"})
    loaded, vocab2, meta = load_dataset(d / "a.jsonl", with_meta=True)
    save_dataset(loaded, vocab2, d / "b.jsonl", meta=meta)
    assert (d / "a.jsonl").read_bytes() == (d / "b.jsonl").read_bytes()
    assert meta == {"note": "x"}
    for a, b in zip(scenes, loaded):
        np.testing.assert_array_equal(a.boxes(), b.boxes())
        assert a.triples == b.triples


def test_context_survives_round_trip(tmp_path, small_vocab):
    ctx = {"latent": [0.5, -1.0], "marks": [[0.2, 0.3, 1.0]]}
    scene = Scene("c", [Entity(0, BBox(0.1, 0.1, 0.2, 0.2))], [], ctx)
    save_dataset([scene], small_vocab, tmp_path / "d.jsonl")
    assert load_dataset(tmp_path / "d.jsonl")[0][0].context == ctx


def test_vocab_validation():
    with pytest.raises(DatasetError):
        Vocab.from_dict({"categories": [], "predicates": ["a"], "asymmetric": [0], "symmetric": [0]})
    with pytest.raises(DatasetError):
        Vocab.from_dict({"categories": [], "predicates": ["a", "b"], "inverse": [[0, 0]]})


def test_vocab_partners_and_digest(small_vocab):
    assert small_vocab.inverse_partners() == {2: {3}, 3: {2}}
    assert small_vocab.digest() == Vocab.from_dict(small_vocab.to_dict()).digest()
    other = Vocab.from_dict({**small_vocab.to_dict(), "predicates": ["on", "near", "above", "below"]})
    assert other.digest() != small_vocab.digest()


def test_validate_bbox():
    assert validate_bbox([0, 0, 1, 1]) == BBox(0.0, 0.0, 1.0, 1.0)
    with pytest.raises(DatasetError):
        validate_bbox([0, 0, 1])
    with pytest.raises(DatasetError):
        validate_bbox([0, 0, float("nan"), 1])


def test_run_config_defaults_and_round_trip():
    cfg = RunConfig()
    assert cfg.beta == 120 and cfg.top_n == 100
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        RunConfig(use_relation_embedding=False, use_subject_object_embeddings=False).validate()
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})


def test_one_hot():
    np.testing.assert_array_equal(one_hot(np.array([2, 0]), 3), [[0, 0, 1], [1, 0, 0]])
