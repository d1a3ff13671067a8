import numpy as np
import pytest
from hypothesis import settings

from rifa.scenedata import BBox, Entity, Scene, Triple, Vocab

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_vocab():
    # on (asym), near (sym), above/under (inverse pair)
    return Vocab(
        categories=["cup", "table", "person"],
        predicates=["on", "near", "above", "under"],
        asymmetric=[0],
        symmetric=[1],
        inverse=[(2, 3)],
    )


def random_scene(rng, m, n_predicates, n_triples, feature_dim=None, scene_id="s"):
    entities = []
    for _ in range(m):
        x1, y1 = rng.uniform(0, 0.7, size=2)
        w, h = rng.uniform(0.05, 0.3, size=2)
        feat = rng.normal(size=feature_dim) if feature_dim else None
        entities.append(Entity(int(rng.integers(0, 3)), BBox(x1, y1, x1 + w, y1 + h), feat))
    triples = set()
    if m >= 2:
        for _ in range(n_triples):
            s, o = rng.choice(m, size=2, replace=False)
            triples.add(Triple(int(s), int(rng.integers(0, n_predicates)), int(o)))
    return Scene(scene_id, entities, sorted(triples))
