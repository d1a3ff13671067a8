"""Train a small model and read off ranked triples for one scene.

Run: python3 demos/03_train_and_rank.py
"""
# %%
import numpy as np

from rifa import RunConfig, generate_dataset, predict_scene, train
from rifa.pairnet import embed_entities, select_top_pairs, semantic_connection
from rifa.pipeline import prepare_scene
from rifa.synthgen import standard_config

train_scenes, vocab = generate_dataset(standard_config(seed=0, n_scenes=80))
test_scenes, _ = generate_dataset(standard_config(seed=500, n_scenes=5))
model = train(RunConfig(epochs=10, seed=0), train_scenes, vocab)
for row in model.trace[::2]:
    print(f"epoch {row['epoch']:>2}  total {row['total']:.4f}  sc {row['l_sc']:.4f}  rp {row['l_rp']:.4f}  rc {row['l_rc']:.4f}")

# %% Connection strength is directional: sc[i, j] and sc[j, i] differ
scene = test_scenes[0]
prep = prepare_scene(model, scene)
sc = semantic_connection(model.pairnet, embed_entities(model.pairnet, prep.inputs))
print("max |sc - sc.T| =", round(float(np.abs(sc - sc.T).max()), 4))
truth = {(t.subject, t.object) for t in scene.triples}
top = select_top_pairs(sc, 20)
print("top-20 proposals hit", sum(p in truth for p in top), "of", len(truth), "related pairs")

# %% Ranked triples: rs = sc + beta * rp^2 * rc
pred = predict_scene(model, scene, k=10)
gt = set(scene.triples)
for t in pred.triples:
    hit = "*" if (t.s, t.p, t.o) in {(g.subject, g.predicate, g.object) for g in gt} else " "
    print(f"{hit} {t.s:>2} {vocab.predicates[t.p]:>8} {t.o:<2}  rs {t.rs:8.3f}  sc {t.sc:+.3f}  rp {t.rp:.3f}  rc {t.rc:.3f}")
