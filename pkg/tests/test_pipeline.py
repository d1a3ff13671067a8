import numpy as np
import pytest

from rifa.nnet import max_relative_error, numeric_gradients
from rifa.pipeline import (
    TrainingDiverged,
    flat_grads,
    init_model,
    load_checkpoint,
    predict_dataset,
    predict_scene,
    prepare_scene,
    save_checkpoint,
    scene_loss,
    train,
    zero_grad_dict,
)
from rifa.scenedata import BBox, Entity, RunConfig, Scene
from rifa.synthgen import GenConfig, generate_dataset

TINY = dict(embed_dim=4, branch_hidden=(6,), head_hidden=(5,), rel_hidden=(6,))


@pytest.fixture(scope="module")
def data():
    return generate_dataset(GenConfig(n_scenes=12, entities_min=4, entities_max=7, feature_dim=6, seed=21))


@pytest.fixture(scope="module")
def trained(data):
    scenes, vocab = data
    return train(RunConfig(epochs=3, seed=5, **TINY), scenes, vocab)


def pipeline_grad_error(model, scene):
    prep = prepare_scene(model, scene)
    grads = zero_grad_dict(model)
    scene_loss(model, prep, grads)
    numeric = numeric_gradients(lambda: sum(scene_loss(model, prep)), model.arrays(), 1e-5)
    return max_relative_error(flat_grads(model, grads), numeric)


@pytest.mark.parametrize("flags", [
    {},
    {"use_relation_embedding": False},
    {"use_subject_object_embeddings": False},
    {"use_relation_possibility": False},
    {"symmetric_scorer": True},
    {"hidden_activation": "tanh"},
])
def test_total_loss_gradients(data, flags):
    scenes, vocab = data
    model = init_model(RunConfig(seed=3, **TINY, **flags), vocab, 6)
    assert pipeline_grad_error(model, scenes[0]) < 1e-4


def test_gradients_with_forced_pairs(data):
    # top_n=1 leaves related pairs out of the proposals; they are appended
    scenes, vocab = data
    model = init_model(RunConfig(seed=4, top_n=1, **TINY), vocab, 6)
    scene = next(s for s in scenes if len({(t.subject, t.object) for t in s.triples}) > 1)
    assert pipeline_grad_error(model, scene) < 1e-4


def test_total_gradient_is_sum_of_parts(data):
    scenes, vocab = data
    model = init_model(RunConfig(seed=8, **TINY), vocab, 6)
    prep = prepare_scene(model, scenes[1])
    grads = zero_grad_dict(model)
    parts = scene_loss(model, prep, grads)
    total = flat_grads(model, grads)
    components = [numeric_gradients(lambda i=i: scene_loss(model, prep)[i], model.arrays(), 1e-5) for i in range(3)]
    summed = [a + b + c for a, b, c in zip(*components)]
    assert max_relative_error(total, summed) < 1e-4
    assert len(parts) == 3


def test_same_seed_same_trace(data):
    scenes, vocab = data
    a = train(RunConfig(epochs=2, seed=1, **TINY), scenes, vocab)
    b = train(RunConfig(epochs=2, seed=1, **TINY), scenes, vocab)
    assert a.trace == b.trace
    for x, y in zip(a.arrays(), b.arrays()):
        np.testing.assert_array_equal(x, y)


def test_zero_learning_rate_freezes_everything(data):
    scenes, vocab = data
    cfg = RunConfig(epochs=3, seed=2, lr=0.0, **TINY)
    before = [a.copy() for a in init_model(cfg, vocab, 6).arrays()]
    model = train(cfg, scenes, vocab)
    for x, y in zip(before, model.arrays()):
        np.testing.assert_array_equal(x, y)
    totals = [t["total"] for t in model.trace]
    assert totals == [totals[0]] * 4


def test_training_reduces_loss(trained):
    assert trained.trace[-1]["total"] < trained.trace[0]["total"]
    assert [t["epoch"] for t in trained.trace] == [0, 1, 2, 3]


def test_divergence_reported(data, monkeypatch):
    import rifa.pipeline as pipeline

    scenes, vocab = data
    monkeypatch.setattr(pipeline, "scene_loss", lambda model, prep, grads=None: (float("nan"), 0.0, 0.0))
    with pytest.raises(TrainingDiverged, match="epoch 1"):
        pipeline.train(RunConfig(epochs=1, **TINY), scenes, vocab)


def test_predictions_are_ranked_and_bounded(trained, data):
    scenes, _ = data
    pred = predict_scene(trained, scenes[0], k=15)
    assert len(pred.triples) == 15
    rs = [t.rs for t in pred.triples]
    assert rs == sorted(rs, reverse=True)
    assert all(t.s != t.o for t in pred.triples)


def test_top_n_limits_pairs(trained, data):
    scenes, _ = data
    pred = predict_scene(trained, scenes[0], k=None, top_n=3)
    assert len({(t.s, t.o) for t in pred.triples}) == 3


def test_workers_do_not_change_output(trained, data):
    scenes, _ = data
    assert predict_dataset(trained, scenes, k=20, workers=3) == predict_dataset(trained, scenes, k=20)


def test_frequency_override(trained, data):
    scenes, vocab = data
    prior = np.zeros(vocab.num_predicates)
    prior[2] = 1.0
    pred = predict_scene(trained, scenes[0], k=None, rc_override=prior)
    assert {t.p for t in pred.triples[: len(pred.triples) // vocab.num_predicates]} == {2}


def test_single_entity_scene(trained, data):
    _, vocab = data
    lone = Scene("lone", [Entity(0, BBox(0.1, 0.1, 0.2, 0.2))], [])
    assert predict_scene(trained, lone).triples == []
    model = train(RunConfig(epochs=1, **TINY), [lone], vocab)
    assert model.trace[-1]["l_rp"] == 0.0


def test_checkpoint_round_trip(tmp_path, trained, data):
    scenes, _ = data
    save_checkpoint(trained, tmp_path / "a.json", provenance={"note": 1})
    back = load_checkpoint(tmp_path / "a.json")
    assert back.trace == trained.trace and back.config == trained.config
    assert predict_scene(back, scenes[2]) == predict_scene(trained, scenes[2])
    save_checkpoint(back, tmp_path / "b.json", provenance={"note": 1})
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.json")
