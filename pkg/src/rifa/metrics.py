"""Triple matching and recall metrics.

All recalls are image-wise: each scene's recall is computed from its own
top-k list and the per-scene values are averaged over the scenes that have
at least one relevant ground-truth triple. Values are percentages.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .scenedata import Scene, Triple, Vocab
from .scoring import RankedPredictions

GROUPS = ("asym", "sym", "inv")


def _top_keys(pred, k: int) -> list[tuple[int, int, int]]:
    if pred is None:
        return []
    if isinstance(pred, RankedPredictions):
        return pred.top(k)
    return [tuple(t) for t in list(pred)[:k]]


def match_predictions(pred, scene: Scene, k: int) -> set[Triple]:
    """Ground-truth triples of ``scene`` present among the top-``k`` predictions.

    ``pred`` is a RankedPredictions or a ranked sequence of (s, p, o).
    """
    top = _top_keys(pred, k)
    for s, _, o in top:
        if not (0 <= s < scene.m and 0 <= o < scene.m):
            raise IndexError(f"scene {scene.scene_id!r}: prediction ({s}, {o}) references a missing entity")
    found = set(top)
    return {t for t in scene.triples if tuple(t) in found}


def _align(preds, scenes: Sequence[Scene]) -> list:
    if isinstance(preds, Mapping):
        return [preds.get(s.scene_id) for s in scenes]
    preds = list(preds)
    if preds and isinstance(preds[0], RankedPredictions):
        by_id = {p.scene_id: p for p in preds}
        return [by_id.get(s.scene_id) for s in scenes]
    if len(preds) != len(scenes):
        raise ValueError("predictions and scenes differ in length")
    return preds


def _mean(values: list[float]) -> float | None:
    # sequential sum: order-stable and independent of numpy's pairwise summation
    return sum(values) / len(values) if values else None


def recall_at_k(preds, scenes: Sequence[Scene], k: int) -> float:
    per_scene = []
    for pred, scene in zip(_align(preds, scenes), scenes):
        if not scene.triples:
            continue
        per_scene.append(100.0 * len(match_predictions(pred, scene, k)) / len(scene.triples))
    return _mean(per_scene) or 0.0


def _property_hits(top: list[tuple[int, int, int]], scene: Scene, vocab: Vocab, group: str) -> tuple[int, int]:
    """(counted, denominator) for one scene."""
    topset = set(top)
    matched = {t for t in scene.triples if tuple(t) in topset}
    if group == "asym":
        members = set(vocab.asymmetric)
    elif group == "sym":
        members = set(vocab.symmetric)
    elif group == "inv":
        partners = vocab.inverse_partners()
        members = set(partners)
    else:
        raise ValueError(f"unknown property group {group!r}")
    relevant = [t for t in scene.triples if t.predicate in members]
    hits = 0
    for t in relevant:
        if t not in matched:
            continue
        s, p, o = t
        if group == "asym":
            ok = (o, p, s) not in topset
        elif group == "sym":
            ok = (o, p, s) in topset
        else:
            ok = any((o, q, s) in topset for q in partners[p])
        hits += ok
    return hits, len(relevant)


def property_recall(preds, scenes: Sequence[Scene], vocab: Vocab, k: int, group: str) -> float | None:
    """Recall where a match must also respect the group's property.

    asym: (o, p, s) must be absent from the top-k; sym: (o, p, s) present;
    inv: (o, q, s) present for an inverse partner q. None when the group is
    empty in the vocabulary or no scene holds such a triple.
    """
    if group == "asym" and not vocab.asymmetric or group == "sym" and not vocab.symmetric:
        return None
    if group == "inv" and not vocab.inverse:
        return None
    per_scene = []
    for pred, scene in zip(_align(preds, scenes), scenes):
        hits, denom = _property_hits(_top_keys(pred, k), scene, vocab, group)
        if denom:
            per_scene.append(100.0 * hits / denom)
    return _mean(per_scene)


def per_relation_recall(preds, scenes: Sequence[Scene], num_predicates: int, k: int) -> tuple[dict[int, float], float]:
    """Per-predicate recall from the global top-k list, and their unweighted mean."""
    buckets: dict[int, list[float]] = {}
    for pred, scene in zip(_align(preds, scenes), scenes):
        matched = match_predictions(pred, scene, k)
        gt_by_p: dict[int, int] = {}
        hit_by_p: dict[int, int] = {}
        for t in scene.triples:
            gt_by_p[t.predicate] = gt_by_p.get(t.predicate, 0) + 1
        for t in matched:
            hit_by_p[t.predicate] = hit_by_p.get(t.predicate, 0) + 1
        for p, count in gt_by_p.items():
            buckets.setdefault(p, []).append(100.0 * hit_by_p.get(p, 0) / count)
    table = {p: _mean(v) for p, v in sorted(buckets.items()) if p < num_predicates}
    mean = _mean(list(table.values())) or 0.0
    return table, mean


def predicate_frequencies(scenes: Iterable[Scene], num_predicates: int) -> np.ndarray:
    counts = np.zeros(num_predicates)
    for scene in scenes:
        for t in scene.triples:
            counts[t.predicate] += 1
    total = counts.sum()
    return counts / total if total else np.full(num_predicates, 1.0 / num_predicates)


@dataclass
class MetricsSummary:
    ks: list[int]
    recall: dict[int, float]
    asym: dict[int, float | None]
    sym: dict[int, float | None]
    inv: dict[int, float | None]
    per_relation: dict[int, dict[int, float]]
    mean_per_relation: dict[int, float]
    predicates: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "recall": {str(k): v for k, v in self.recall.items()},
            "recall_asym": {str(k): v for k, v in self.asym.items()},
            "recall_sym": {str(k): v for k, v in self.sym.items()},
            "recall_inv": {str(k): v for k, v in self.inv.items()},
            "per_relation": {
                str(k): {str(p): v for p, v in table.items()} for k, table in self.per_relation.items()
            },
            "mean_per_relation": {str(k): v for k, v in self.mean_per_relation.items()},
            "predicates": list(self.predicates),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsSummary":
        def keyed(m):
            return {int(k): v for k, v in m.items()}

        return cls(
            ks=[int(k) for k in d["ks"]],
            recall=keyed(d["recall"]),
            asym=keyed(d["recall_asym"]),
            sym=keyed(d["recall_sym"]),
            inv=keyed(d["recall_inv"]),
            per_relation={int(k): keyed(t) for k, t in d["per_relation"].items()},
            mean_per_relation=keyed(d["mean_per_relation"]),
            predicates=list(d.get("predicates", [])),
            provenance=d.get("provenance", {}),
        )

    def format_table(self) -> str:
        def fmt(v):
            return "   n/a" if v is None else f"{v:6.2f}"

        lines = ["metric      " + "".join(f"{'@' + str(k):>8}" for k in self.ks)]
        for label, values in (
            ("R", self.recall), ("R_A", self.asym), ("R_S", self.sym), ("R_I", self.inv),
            ("mean/rel", self.mean_per_relation),
        ):
            lines.append(f"{label:<12}" + "".join(f"  {fmt(values.get(k))}" for k in self.ks))
        lines.append("")
        lines.append("per-relation recall")
        preds = sorted({p for t in self.per_relation.values() for p in t})
        for p in preds:
            name = self.predicates[p] if p < len(self.predicates) else str(p)
            lines.append(f"  {name:<14}" + "".join(f"  {fmt(self.per_relation[k].get(p))}" for k in self.ks))
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "predicate_id", "predicate", "recall"])
        for k in self.ks:
            for p, v in sorted(self.per_relation[k].items(), key=lambda kv: (-kv[1], kv[0])):
                name = self.predicates[p] if p < len(self.predicates) else str(p)
                writer.writerow([k, p, name, repr(v)])
        return buf.getvalue()


def evaluate(preds, scenes: Sequence[Scene], vocab: Vocab, ks: Sequence[int]) -> MetricsSummary:
    aligned = _align(preds, scenes)
    ks = list(ks)
    per_rel, means = {}, {}
    for k in ks:
        per_rel[k], means[k] = per_relation_recall(aligned, scenes, vocab.num_predicates, k)
    return MetricsSummary(
        ks=ks,
        recall={k: recall_at_k(aligned, scenes, k) for k in ks},
        asym={k: property_recall(aligned, scenes, vocab, k, "asym") for k in ks},
        sym={k: property_recall(aligned, scenes, vocab, k, "sym") for k in ks},
        inv={k: property_recall(aligned, scenes, vocab, k, "inv") for k in ks},
        per_relation=per_rel,
        mean_per_relation=means,
        predicates=list(vocab.predicates),
    )
