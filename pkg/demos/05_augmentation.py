"""Completing symmetric and inverse annotations.

Annotators often record only one direction. Extending a dataset adds the
missing reverse forms for a sampled fraction of eligible triples.

Run: python3 demos/05_augmentation.py
"""
# %%
from rifa import RunConfig, evaluate, generate_dataset, predict_dataset, train
from rifa.augment import AugmentSpec, extend_dataset
from rifa.synthgen import drop_reverse_forms, standard_config

full, vocab = generate_dataset(standard_config(seed=2, n_scenes=120))
thin = drop_reverse_forms(full, vocab, seed=2)
test, _ = generate_dataset(standard_config(seed=1002, n_scenes=40))

# %% Extension report at a few sampling fractions
for fraction in (0.0, 0.5, 1.0):
    _, report = extend_dataset(thin, AugmentSpec.from_vocab(vocab, fraction, seed=2), vocab)
    print(fraction, report)

# %% Train on the thinned and the fully extended data
extended, _ = extend_dataset(thin, AugmentSpec.from_vocab(vocab, 1.0, seed=2), vocab)
for name, data in (("thinned", thin), ("extended", extended)):
    model = train(RunConfig(epochs=15, seed=2), data, vocab)
    s = evaluate(predict_dataset(model, test, k=100), test, vocab, [20])
    print(f"{name:>9}: R_S@20 {s.sym[20]:.1f}  R_I@20 {s.inv[20]:.1f}")
