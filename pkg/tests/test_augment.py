import pytest
from hypothesis import given, strategies as st

from rifa.augment import AugmentSpec, extend_dataset
from rifa.scenedata import BBox, Entity, Scene, Triple

ON, NEAR, ABOVE, UNDER = 0, 1, 2, 3


def scene(triples, sid="s", m=4):
    return Scene(sid, [Entity(0, BBox(0, 0, 0.5, 0.5))] * m, [Triple(*t) for t in triples])


def test_symmetric_form_added(small_vocab):
    out, report = extend_dataset([scene([(0, NEAR, 1)])], AugmentSpec.from_vocab(small_vocab, 1.0))
    assert out[0].triples == [Triple(0, NEAR, 1), Triple(1, NEAR, 0)]
    assert report["added"] == 1


def test_inverse_form_added(small_vocab):
    out, _ = extend_dataset([scene([(0, ABOVE, 1)])], AugmentSpec.from_vocab(small_vocab, 1.0))
    assert Triple(1, UNDER, 0) in out[0].triples


def test_asymmetric_untouched(small_vocab):
    out, report = extend_dataset([scene([(0, ON, 1)])], AugmentSpec.from_vocab(small_vocab, 1.0))
    assert out[0].triples == [Triple(0, ON, 1)]
    assert report["eligible"] == 0


def test_half_of_ten_sampled(small_vocab):
    scenes = [scene([(0, NEAR, 1)], sid=f"s{i}") for i in range(10)]
    _, report = extend_dataset(scenes, AugmentSpec.from_vocab(small_vocab, 0.5, seed=3))
    assert report["eligible"] == 10 and report["sampled"] == 5 and report["added"] == 5


def test_duplicates_skipped(small_vocab):
    out, report = extend_dataset([scene([(0, NEAR, 1), (1, NEAR, 0)])], AugmentSpec.from_vocab(small_vocab, 1.0))
    assert len(out[0].triples) == 2
    assert report["skipped_duplicates"] == 2 and report["added"] == 0


def test_input_not_mutated(small_vocab):
    original = scene([(0, NEAR, 1)])
    extend_dataset([original], AugmentSpec.from_vocab(small_vocab, 1.0))
    assert original.triples == [Triple(0, NEAR, 1)]


def test_fraction_bounds_and_vocab_check(small_vocab):
    with pytest.raises(ValueError):
        AugmentSpec(1.5)
    with pytest.raises(ValueError, match="not in the vocabulary"):
        extend_dataset([], AugmentSpec(0.5, symmetric=[9]), small_vocab)


@given(st.floats(0, 1), st.integers(0, 1000))
def test_sample_size_and_determinism(small_vocab, fraction, seed):
    scenes = [scene([(0, NEAR, 1), (2, ABOVE, 3), (1, ON, 2)], sid=f"s{i}") for i in range(7)]
    spec = AugmentSpec.from_vocab(small_vocab, fraction, seed)
    a, ra = extend_dataset(scenes, spec)
    b, rb = extend_dataset(scenes, spec)
    assert ra == rb and [s.triples for s in a] == [s.triples for s in b]
    assert ra["sampled"] == int(fraction * 14)
    assert ra["added"] + ra["skipped_duplicates"] == ra["sampled"]
    for before, after in zip(scenes, a):
        assert after.triples[: len(before.triples)] == before.triples
        assert len(set(after.triples)) == len(after.triples)
