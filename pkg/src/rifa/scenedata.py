"""Scenes, vocabularies, run configuration and the JSON-lines dataset format.

File layout::

    {"vocab": {"categories": [...], "predicates": [...], "asymmetric": [...],
               "symmetric": [...], "inverse": [[p, q], ...]}, "meta": {...}}
    {"scene_id": "...", "entities": [{"category": c, "bbox": [x1, y1, x2, y2],
     "feature": [...]}, ...], "triples": [[s, p, o], ...], "context": {...}}
    ...

``meta`` (header) and ``context`` (scene) are optional. ``context`` holds the
scene latent vector and context marks consumed by the synthetic relation
feature provider.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np


class DatasetError(ValueError):
    pass


class BBox(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float


class Triple(NamedTuple):
    subject: int
    predicate: int
    object: int


def validate_bbox(box: Sequence[float]) -> BBox:
    if len(box) != 4:
        raise DatasetError(f"bbox needs 4 coordinates, got {len(box)}")
    b = BBox(*(float(v) for v in box))
    if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in b):
        raise DatasetError(f"bbox {list(b)} outside [0, 1]")
    if not (b.x1 < b.x2 and b.y1 < b.y2):
        raise DatasetError(f"bbox {list(b)} is degenerate")
    return b


@dataclass
class Entity:
    category: int
    bbox: BBox
    feature: np.ndarray | None = None


@dataclass
class Scene:
    scene_id: str
    entities: list[Entity]
    triples: list[Triple]
    context: dict | None = None

    @property
    def m(self) -> int:
        return len(self.entities)

    def boxes(self) -> np.ndarray:
        return np.array([e.bbox for e in self.entities], dtype=np.float64)

    def categories(self) -> np.ndarray:
        return np.array([e.category for e in self.entities], dtype=np.int64)


@dataclass
class Vocab:
    categories: list[str]
    predicates: list[str]
    asymmetric: list[int] = field(default_factory=list)
    symmetric: list[int] = field(default_factory=list)
    inverse: list[tuple[int, int]] = field(default_factory=list)

    @property
    def num_categories(self) -> int:
        return len(self.categories)

    @property
    def num_predicates(self) -> int:
        return len(self.predicates)

    def inverse_partners(self) -> dict[int, set[int]]:
        partners: dict[int, set[int]] = {}
        for p, q in self.inverse:
            partners.setdefault(p, set()).add(q)
            partners.setdefault(q, set()).add(p)
        return partners

    def validate(self) -> None:
        n = self.num_predicates
        for name, ids in (("asymmetric", self.asymmetric), ("symmetric", self.symmetric)):
            for p in ids:
                if not 0 <= p < n:
                    raise DatasetError(f"vocab.{name}: predicate id {p} out of range")
        both = set(self.asymmetric) & set(self.symmetric)
        if both:
            raise DatasetError(f"vocab: predicates {sorted(both)} are both asymmetric and symmetric")
        for p, q in self.inverse:
            if not (0 <= p < n and 0 <= q < n) or p == q:
                raise DatasetError(f"vocab.inverse: bad pair {[p, q]}")

    def to_dict(self) -> dict:
        return {
            "categories": list(self.categories),
            "predicates": list(self.predicates),
            "asymmetric": list(self.asymmetric),
            "symmetric": list(self.symmetric),
            "inverse": [list(pq) for pq in self.inverse],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        v = cls(
            categories=list(d["categories"]),
            predicates=list(d["predicates"]),
            asymmetric=[int(p) for p in d.get("asymmetric", [])],
            symmetric=[int(p) for p in d.get("symmetric", [])],
            inverse=[(int(p), int(q)) for p, q in d.get("inverse", [])],
        )
        v.validate()
        return v

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunConfig:
    """Hyper-parameters of one model run. Defaults follow the reference setup
    (beta=120, top_n=100); everything else is a desk-scale choice."""

    beta: float = 120.0
    top_n: int = 100
    embed_dim: int = 64
    feature_dim: int | None = None  # inferred from data when None
    branch_hidden: tuple[int, ...] = (128, 128)
    head_hidden: tuple[int, ...] = (64, 64)
    rel_hidden: tuple[int, ...] = (128, 64)
    hidden_activation: str = "relu"
    optimizer: str = "adam"
    lr: float = 1e-3
    epochs: int = 30
    seed: int = 0
    ks: tuple[int, ...] = (20, 50, 100)
    use_relation_embedding: bool = True
    use_subject_object_embeddings: bool = True
    use_relation_possibility: bool = True
    symmetric_scorer: bool = False

    def __post_init__(self):
        for name in ("branch_hidden", "head_hidden", "rel_hidden", "ks"):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if not self.beta > 0:
            raise DatasetError("beta must be > 0")
        if self.top_n < 1:
            raise DatasetError("top_n must be >= 1")
        if not self.ks or any(k <= 0 for k in self.ks) or list(self.ks) != sorted(set(self.ks)):
            raise DatasetError("ks must be positive and strictly ascending")
        if not (self.use_relation_embedding or self.use_subject_object_embeddings):
            raise DatasetError("relation embedding and subject/object embeddings cannot both be disabled")
        if self.epochs < 0 or self.lr < 0:
            raise DatasetError("epochs and lr must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("branch_hidden", "head_hidden", "rel_hidden", "ks"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DatasetError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**d)


def validate_scene(scene: Scene, vocab: Vocab, feature_dim: int | None = None) -> None:
    where = f"scene {scene.scene_id!r}"
    if scene.m < 1:
        raise DatasetError(f"{where}: entities must be non-empty")
    for idx, ent in enumerate(scene.entities):
        if not 0 <= ent.category < vocab.num_categories:
            raise DatasetError(f"{where}: entities[{idx}].category {ent.category} out of range")
        if ent.feature is not None:
            if not np.isfinite(ent.feature).all():
                raise DatasetError(f"{where}: entities[{idx}].feature has non-finite values")
            if feature_dim is not None and len(ent.feature) != feature_dim:
                raise DatasetError(
                    f"{where}: entities[{idx}].feature has length {len(ent.feature)}, expected {feature_dim}"
                )
    seen = set()
    for t in scene.triples:
        s, p, o = t
        if not (0 <= s < scene.m and 0 <= o < scene.m):
            raise DatasetError(f"{where}: triples {list(t)} references a missing entity")
        if s == o:
            raise DatasetError(f"{where}: triples {list(t)} is a self-relation")
        if not 0 <= p < vocab.num_predicates:
            raise DatasetError(f"{where}: triples {list(t)} has unknown predicate id {p}")
        if t in seen:
            raise DatasetError(f"{where}: triples {list(t)} is duplicated")
        seen.add(t)


def _scene_to_dict(scene: Scene) -> dict:
    ents = []
    for e in scene.entities:
        d: dict[str, Any] = {"category": int(e.category), "bbox": [float(v) for v in e.bbox]}
        if e.feature is not None:
            d["feature"] = [float(v) for v in e.feature]
        ents.append(d)
    out: dict[str, Any] = {
        "scene_id": scene.scene_id,
        "entities": ents,
        "triples": [[int(s), int(p), int(o)] for s, p, o in scene.triples],
    }
    if scene.context is not None:
        out["context"] = scene.context
    return out


def _scene_from_dict(d: dict) -> Scene:
    ents = []
    for e in d["entities"]:
        feat = e.get("feature")
        ents.append(
            Entity(
                category=int(e["category"]),
                bbox=validate_bbox(e["bbox"]),
                feature=None if feat is None else np.asarray(feat, dtype=np.float64),
            )
        )
    triples = []
    for t in d["triples"]:
        if len(t) != 3:
            raise DatasetError(f"triple {t} must have 3 entries")
        triples.append(Triple(*(int(v) for v in t)))
    return Scene(str(d["scene_id"]), ents, triples, d.get("context"))


def dumps_line(obj: dict) -> str:
    # sorted keys + repr floats give a canonical, shortest round-trip encoding
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_dataset(scenes: Iterable[Scene], vocab: Vocab, path: str | Path, meta: dict | None = None) -> None:
    header: dict[str, Any] = {"vocab": vocab.to_dict()}
    if meta:
        header["meta"] = meta
    lines = [dumps_line(header)] + [dumps_line(_scene_to_dict(s)) for s in scenes]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}") from exc


def load_dataset(path: str | Path, with_meta: bool = False):
    """Read a dataset file. Returns ``(scenes, vocab)`` or, with ``with_meta``,
    ``(scenes, vocab, meta)``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty file, expected a vocab header")
    try:
        header = json.loads(lines[0])
        vocab = Vocab.from_dict(header["vocab"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"{path}:1: bad vocab header ({exc})") from exc
    scenes = []
    feature_dim = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            scene = _scene_from_dict(json.loads(line))
            if feature_dim is None:
                feature_dim = next((len(e.feature) for e in scene.entities if e.feature is not None), None)
            validate_scene(scene, vocab, feature_dim)
        except (json.JSONDecodeError, KeyError, TypeError, DatasetError) as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from exc
        scenes.append(scene)
    if with_meta:
        return scenes, vocab, header.get("meta")
    return scenes, vocab


def one_hot(categories: np.ndarray, num_categories: int) -> np.ndarray:
    out = np.zeros((len(categories), num_categories))
    out[np.arange(len(categories)), categories] = 1.0
    return out
