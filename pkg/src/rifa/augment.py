"""Extend annotations with the symmetric or inverse forms of existing triples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenedata import Scene, Triple, Vocab


@dataclass
class AugmentSpec:
    fraction: float
    symmetric: list[int] = field(default_factory=list)
    inverse: list[tuple[int, int]] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction {self.fraction} outside [0, 1]")

    @classmethod
    def from_vocab(cls, vocab: Vocab, fraction: float, seed: int = 0) -> "AugmentSpec":
        return cls(fraction, list(vocab.symmetric), list(vocab.inverse), seed)

    def validate(self, vocab: Vocab) -> None:
        n = vocab.num_predicates
        ids = list(self.symmetric) + [p for pq in self.inverse for p in pq]
        bad = [p for p in ids if not 0 <= p < n]
        if bad:
            raise ValueError(f"predicate ids {bad} are not in the vocabulary")


def extend_dataset(scenes: list[Scene], spec: AugmentSpec, vocab: Vocab | None = None) -> tuple[list[Scene], dict]:
    """Sample ``floor(fraction * eligible)`` annotations over the whole dataset
    and add their symmetric (o, p, s) and/or inverse (o, q, s) forms.

    Additions already present are skipped and counted. Input scenes are not
    modified; new triples are appended after the originals.
    """
    if vocab is not None:
        spec.validate(vocab)
    sym = set(spec.symmetric)
    partners: dict[int, list[int]] = {}
    for p, q in spec.inverse:
        partners.setdefault(p, []).append(q)
        partners.setdefault(q, []).append(p)

    eligible = [
        (si, ti)
        for si, scene in enumerate(scenes)
        for ti, t in enumerate(scene.triples)
        if t.predicate in sym or t.predicate in partners
    ]
    n_pick = math.floor(spec.fraction * len(eligible))
    rng = np.random.default_rng(spec.seed)
    picked = sorted(rng.choice(len(eligible), size=n_pick, replace=False).tolist()) if n_pick else []

    additions: dict[int, list[Triple]] = {}
    for idx in picked:
        si, ti = eligible[idx]
        s, p, o = scenes[si].triples[ti]
        if p in sym:
            additions.setdefault(si, []).append(Triple(o, p, s))
        for q in sorted(partners.get(p, [])):
            additions.setdefault(si, []).append(Triple(o, q, s))

    out = []
    added = skipped = 0
    for si, scene in enumerate(scenes):
        triples = list(scene.triples)
        present = set(triples)
        for t in additions.get(si, []):
            if t in present:
                skipped += 1
                continue
            triples.append(t)
            present.add(t)
            added += 1
        out.append(Scene(scene.scene_id, scene.entities, triples, scene.context))
    report = {
        "eligible": len(eligible),
        "sampled": n_pick,
        "added": added,
        "skipped_duplicates": skipped,
        "fraction": spec.fraction,
        "seed": spec.seed,
    }
    return out, report
