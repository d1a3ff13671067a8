"""Relation prediction for proposed subject-object pairs.

For every proposed pair the network sees the context feature of the
relation box (the smallest box covering both entities) and/or the pair's
subject and object embeddings, and emits a relation possibility ``rp`` and
a distribution ``rc`` over predicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Protocol, Sequence

import numpy as np

from .nnet import ContractError, Layer, Mlp, backward, forward, init_mlp
from .pairnet import EntityEmbeddings, TrainingTargets, pair_features, pair_features_backward
from .scenedata import Scene

RP_CLAMP = 1e-7
RC_FLOOR = 1e-12
_SALT = 0x51FA


def relation_box(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float, float]:
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def relation_boxes(boxes: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    a, b = boxes[pairs[:, 0]], boxes[pairs[:, 1]]
    return np.hstack([np.minimum(a[:, :2], b[:, :2]), np.maximum(a[:, 2:], b[:, 2:])])


@lru_cache(maxsize=None)
def category_code(category: int, dim: int) -> np.ndarray:
    """Fixed pseudo-random appearance code of an entity category."""
    code = np.random.default_rng([_SALT, 1, category, dim]).normal(size=dim)
    code.setflags(write=False)
    return code


@lru_cache(maxsize=None)
def mark_code(mark: int, dim: int) -> np.ndarray:
    code = np.random.default_rng([_SALT, 2, mark, dim]).normal(size=dim) * 1.5
    code.setflags(write=False)
    return code


@lru_cache(maxsize=None)
def _geometry_projection(dim: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([_SALT, 3, dim])
    proj = rng.normal(scale=4.0, size=(8, dim))
    phase = rng.uniform(0, 2 * np.pi, size=dim)
    return proj, phase


def box_geometry(boxes: np.ndarray, dim: int) -> np.ndarray:
    """Random Fourier encoding of box coordinates, centre and size."""
    boxes = np.atleast_2d(boxes)
    centre = (boxes[:, :2] + boxes[:, 2:]) / 2
    size = boxes[:, 2:] - boxes[:, :2]
    proj, phase = _geometry_projection(dim)
    return np.sin(np.hstack([boxes, centre, size]) @ proj + phase)


class ContextProvider(Protocol):
    dim: int

    def features(self, boxes: np.ndarray) -> np.ndarray: ...


class ProviderError(KeyError):
    pass


class SyntheticContextProvider:
    """Deterministic stand-in for pooled visual features inside a region.

    The feature of a region mixes an encoding of its geometry, the
    appearance codes of entities weighted by how much of each falls inside,
    the codes of context marks located inside, and the scene latent.
    """

    def __init__(self, scene: Scene, dim: int):
        self.dim = dim
        self._boxes = scene.boxes()
        self._codes = np.array([category_code(int(c), dim) for c in scene.categories()]).reshape(-1, dim)
        ctx = scene.context or {}
        marks = np.asarray(ctx.get("marks", []), dtype=np.float64).reshape(-1, 3)
        self._mark_xy = marks[:, :2]
        self._mark_codes = np.array([mark_code(int(k), dim) for k in marks[:, 2]]).reshape(-1, dim)
        latent = np.asarray(ctx.get("latent", np.zeros(dim)), dtype=np.float64)
        self._latent = np.resize(latent, dim) if latent.size else np.zeros(dim)

    def features(self, boxes: np.ndarray) -> np.ndarray:
        boxes = np.atleast_2d(np.asarray(boxes, dtype=np.float64))
        out = 0.5 * box_geometry(boxes, self.dim) + 0.2 * self._latent
        if len(self._boxes):
            eb = self._boxes
            iw = np.clip(np.minimum(boxes[:, None, 2], eb[None, :, 2]) - np.maximum(boxes[:, None, 0], eb[None, :, 0]), 0, None)
            ih = np.clip(np.minimum(boxes[:, None, 3], eb[None, :, 3]) - np.maximum(boxes[:, None, 1], eb[None, :, 1]), 0, None)
            area = (eb[:, 2] - eb[:, 0]) * (eb[:, 3] - eb[:, 1])
            out = out + 0.5 * ((iw * ih) / area) @ self._codes
        if len(self._mark_xy):
            x, y = self._mark_xy[:, 0], self._mark_xy[:, 1]
            inside = (
                (x[None, :] >= boxes[:, None, 0]) & (x[None, :] <= boxes[:, None, 2])
                & (y[None, :] >= boxes[:, None, 1]) & (y[None, :] <= boxes[:, None, 3])
            )
            out = out + inside.astype(np.float64) @ self._mark_codes
        return out


class PrecomputedContextProvider:
    """Lookup of externally computed region features keyed by box coordinates."""

    def __init__(self, table: Mapping[tuple, Sequence[float]], dim: int, decimals: int = 6):
        self.dim = dim
        self.decimals = decimals
        self._table = {self._key(k): np.asarray(v, dtype=np.float64) for k, v in table.items()}

    def _key(self, box) -> tuple:
        return tuple(round(float(v), self.decimals) for v in box)

    def features(self, boxes: np.ndarray) -> np.ndarray:
        rows = []
        for box in np.atleast_2d(boxes):
            try:
                rows.append(self._table[self._key(box)])
            except KeyError:
                raise ProviderError(f"no precomputed feature for region {list(box)}") from None
        return np.array(rows).reshape(-1, self.dim)


def relation_feature(provider: ContextProvider, rbox: Sequence[float]) -> np.ndarray:
    return provider.features(np.asarray(rbox, dtype=np.float64)[None, :])[0]


@dataclass
class RelnetParams:
    trunk: Mlp
    possibility: Mlp  # one sigmoid unit
    classes: Mlp  # softmax over predicates
    context_dim: int
    embed_dim: int
    use_relation_embedding: bool = True
    use_subject_object_embeddings: bool = True
    symmetric: bool = False

    def __post_init__(self):
        if not (self.use_relation_embedding or self.use_subject_object_embeddings):
            raise ContractError("at least one of relation or subject/object embeddings must be enabled")
        if self.trunk.in_dim != self.input_dim:
            raise ContractError(f"trunk expects {self.trunk.in_dim} inputs, flags imply {self.input_dim}")
        if self.possibility.layers[-1].activation != "sigmoid" or self.possibility.out_dim != 1:
            raise ContractError("possibility head must be a single sigmoid unit")
        if self.classes.layers[-1].activation != "softmax":
            raise ContractError("class head must end in softmax")

    @property
    def input_dim(self) -> int:
        return self.context_dim * self.use_relation_embedding + 2 * self.embed_dim * self.use_subject_object_embeddings

    @property
    def num_predicates(self) -> int:
        return self.classes.out_dim

    def mlps(self) -> list[Mlp]:
        return [self.trunk, self.possibility, self.classes]

    def arrays(self) -> list[np.ndarray]:
        return [a for mlp in self.mlps() for a in mlp.arrays()]


def init_relnet(
    context_dim: int,
    embed_dim: int,
    num_predicates: int,
    rng: np.random.Generator,
    hidden_sizes=(128, 64),
    hidden: str = "relu",
    use_relation_embedding: bool = True,
    use_subject_object_embeddings: bool = True,
    symmetric: bool = False,
) -> RelnetParams:
    if not (use_relation_embedding or use_subject_object_embeddings):
        raise ContractError("at least one of relation or subject/object embeddings must be enabled")
    in_dim = context_dim * use_relation_embedding + 2 * embed_dim * use_subject_object_embeddings
    trunk = init_mlp([in_dim, *hidden_sizes], rng, hidden=hidden, output=hidden)
    width = trunk.out_dim
    rp_head = init_mlp([width, 1], rng, output="sigmoid")
    rc_head = init_mlp([width, num_predicates], rng, output="softmax")
    return RelnetParams(
        trunk, rp_head, rc_head, context_dim, embed_dim,
        use_relation_embedding, use_subject_object_embeddings, symmetric,
    )


@dataclass
class RelationPrediction:
    pairs: np.ndarray  # P x 2 ordered (subject, object) indices
    rp: np.ndarray  # P
    rc: np.ndarray  # P x n
    _cache: tuple = field(default=(), repr=False)


def predict_relations(
    params: RelnetParams, pairs: np.ndarray, emb: EntityEmbeddings, context: np.ndarray | None
) -> RelationPrediction:
    """``context`` holds one relation-box feature row per pair (ignored when
    the relation embedding is disabled)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    parts = []
    if params.use_relation_embedding:
        if context is None or context.shape != (len(pairs), params.context_dim):
            raise ContractError(f"context must be {len(pairs)} x {params.context_dim}")
        parts.append(context)
    if params.use_subject_object_embeddings:
        parts.append(pair_features(emb, params.symmetric, pairs))
    x = np.hstack(parts)
    h, c_trunk = forward(params.trunk, x)
    rp, c_rp = forward(params.possibility, h)
    rc, c_rc = forward(params.classes, h)
    return RelationPrediction(pairs, rp[:, 0], rc, (c_trunk, c_rp, c_rc))


def relations_backward(
    params: RelnetParams,
    emb: EntityEmbeddings,
    pred: RelationPrediction,
    d_rp: np.ndarray | None,
    d_rc: np.ndarray | None,
    grads: dict,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Accumulate parameter gradients; return (d_subject, d_object) when the
    embeddings feed the network, else None."""
    c_trunk, c_rp, c_rc = pred._cache
    d_h = np.zeros_like(c_trunk.post[-1])
    if d_rp is not None:
        _, g = backward(params.possibility, c_rp, d_rp.reshape(-1, 1), into=grads[id(params.possibility)])
        d_h += g
    if d_rc is not None:
        _, g = backward(params.classes, c_rc, d_rc, into=grads[id(params.classes)])
        d_h += g
    _, d_x = backward(params.trunk, c_trunk, d_h, into=grads[id(params.trunk)])
    if not params.use_subject_object_embeddings:
        return None
    offset = params.context_dim if params.use_relation_embedding else 0
    return pair_features_backward(emb, params.symmetric, d_x[:, offset:], pred.pairs)


@dataclass
class PossibilityLossBreakdown:
    loss: float
    weights: np.ndarray  # gamma per proposal
    grad: np.ndarray  # dL/drp per proposal
    reward_dropped: bool = False


def possibility_loss(rp: np.ndarray, positive: np.ndarray) -> PossibilityLossBreakdown:
    """Weighted binary cross-entropy over proposals.

    ``positive[k]`` marks proposals that carry a ground-truth relation. Each
    proposal weighs 1/|E|, positives an extra 1/|E_t|.
    """
    rp = np.asarray(rp, dtype=np.float64)
    pos = np.asarray(positive, dtype=bool)
    if rp.shape != pos.shape or rp.ndim != 1 or not len(rp):
        raise ContractError("rp and positive must be equal-length non-empty vectors")
    n_pos = int(pos.sum())
    weights = np.full(len(rp), 1.0 / len(rp))
    if n_pos:
        weights = weights + pos / n_pos
    clipped = np.clip(rp, RP_CLAMP, 1.0 - RP_CLAMP)
    lik = np.where(pos, clipped, 1.0 - clipped)
    loss = float(-(weights * np.log(lik)).sum())
    inside = (rp > RP_CLAMP) & (rp < 1.0 - RP_CLAMP)
    grad = np.where(pos, -weights / clipped, weights / (1.0 - clipped)) * inside
    return PossibilityLossBreakdown(loss, weights, grad, reward_dropped=n_pos == 0)


def class_loss(rc: np.ndarray, pairs: np.ndarray, targets: TrainingTargets) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of every ground-truth relation.

    Every related pair of ``targets`` must appear in ``pairs``. Returns the
    loss and its gradient w.r.t. ``rc``.
    """
    grad = np.zeros_like(rc)
    r = targets.num_relations
    if r == 0:
        return 0.0, grad
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    m = targets.m
    row = np.full(m * m, -1)
    row[pairs[:, 0] * m + pairs[:, 1]] = np.arange(len(pairs))
    total = 0.0
    for pair, preds in targets.relations.items():
        k = row[pair[0] * m + pair[1]]
        if k < 0:
            raise ContractError(f"related pair {pair} is not covered by the prediction")
        for p in preds:
            v = rc[k, p]
            if v > RC_FLOOR:
                total -= np.log(v)
                grad[k, p] -= 1.0 / (r * v)
            else:
                total -= np.log(RC_FLOOR)
    return float(total / r), grad


def total_loss(l_sc: float, l_rp: float, l_rc: float) -> float:
    return l_sc + l_rp + l_rc
