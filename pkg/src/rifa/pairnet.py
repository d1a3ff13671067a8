"""Subject/object entity embeddings, pair connection strength and its loss.

Two parameter-disjoint branches embed every entity once as a subject and
once as an object. A tanh-terminated head scores each ordered pair from the
concatenated (subject, object) embeddings, so the score matrix need not be
symmetric. The ``symmetric`` variant shares one branch and feeds the head an
order-invariant combination; it exists as the biased baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nnet import ContractError, ForwardCache, Mlp, backward, forward, init_mlp
from .scenedata import Scene, one_hot

SC_CLAMP = 1e-7


@dataclass
class PairnetParams:
    subject: Mlp
    object: Mlp  # the same object as ``subject`` when symmetric
    head: Mlp
    symmetric: bool = False

    def __post_init__(self):
        if self.subject.in_dim != self.object.in_dim or self.subject.out_dim != self.object.out_dim:
            raise ContractError("subject and object branches must have the same shape")
        if self.head.in_dim != 2 * self.subject.out_dim or self.head.out_dim != 1:
            raise ContractError("head must map 2*D inputs to one output")
        if self.head.layers[-1].activation != "tanh":
            raise ContractError("head must end in tanh")
        if self.symmetric != (self.subject is self.object):
            raise ContractError("symmetric pairnet must share a single branch")

    @property
    def embed_dim(self) -> int:
        return self.subject.out_dim

    def mlps(self) -> list[Mlp]:
        return [self.subject, self.head] if self.symmetric else [self.subject, self.object, self.head]

    def arrays(self) -> list[np.ndarray]:
        return [a for mlp in self.mlps() for a in mlp.arrays()]


def init_pairnet(
    in_dim: int,
    embed_dim: int,
    rng: np.random.Generator,
    branch_hidden=(128, 128),
    head_hidden=(64, 64),
    hidden: str = "relu",
    symmetric: bool = False,
) -> PairnetParams:
    sizes = [in_dim, *branch_hidden, embed_dim]
    subject = init_mlp(sizes, rng, hidden=hidden, output="identity")
    obj = subject if symmetric else init_mlp(sizes, rng, hidden=hidden, output="identity")
    head = init_mlp([2 * embed_dim, *head_hidden, 1], rng, hidden=hidden, output="tanh")
    return PairnetParams(subject, obj, head, symmetric)


def entity_inputs(scene: Scene, num_categories: int, features: np.ndarray, class_vectors: np.ndarray | None = None) -> np.ndarray:
    """Rows of ``[class vector | bbox | visual feature]``, one per entity.

    ``class_vectors`` defaults to one-hot ground-truth classes; pass an m x C
    probability matrix when classes are predicted instead.
    """
    if class_vectors is None:
        class_vectors = one_hot(scene.categories(), num_categories)
    class_vectors = np.asarray(class_vectors, dtype=np.float64)
    if class_vectors.shape != (scene.m, num_categories):
        raise ContractError(f"class_vectors must be {scene.m} x {num_categories}")
    if features.shape[0] != scene.m:
        raise ContractError("one feature row per entity is required")
    return np.hstack([class_vectors, scene.boxes(), features])


@dataclass
class EntityEmbeddings:
    subject: np.ndarray  # theta, m x D
    object: np.ndarray  # tau, m x D
    _caches: tuple = field(default=(), repr=False)


def embed_entities(params: PairnetParams, inputs: np.ndarray) -> EntityEmbeddings:
    if inputs.ndim != 2 or inputs.shape[1] != params.subject.in_dim:
        raise ContractError(f"entity inputs must be m x {params.subject.in_dim}, got {inputs.shape}")
    theta, c_s = forward(params.subject, inputs)
    if params.symmetric:
        return EntityEmbeddings(theta, theta, (c_s,))
    tau, c_o = forward(params.object, inputs)
    return EntityEmbeddings(theta, tau, (c_s, c_o))


def embeddings_backward(
    params: PairnetParams, emb: EntityEmbeddings, d_subject: np.ndarray, d_object: np.ndarray, grads: dict
) -> None:
    """Accumulate branch gradients into ``grads`` (keyed by ``id(mlp)``)."""
    if params.symmetric:
        backward(params.subject, emb._caches[0], d_subject + d_object, into=grads[id(params.subject)])
    else:
        backward(params.subject, emb._caches[0], d_subject, into=grads[id(params.subject)])
        backward(params.object, emb._caches[1], d_object, into=grads[id(params.object)])


def pair_features(emb: EntityEmbeddings, symmetric: bool, pairs: np.ndarray | None = None) -> np.ndarray:
    """Head inputs for ordered pairs; all m*m pairs in row-major order by default.

    Ordered: ``[theta_i | tau_j]``. Symmetric: ``[theta_i + theta_j | |theta_i - theta_j|]``.
    """
    m = emb.subject.shape[0]
    if pairs is None:
        ii, jj = np.divmod(np.arange(m * m), m)
    else:
        ii, jj = pairs[:, 0], pairs[:, 1]
    a, b = emb.subject[ii], emb.object[jj]
    if symmetric:
        return np.hstack([a + b, np.abs(a - b)])
    return np.hstack([a, b])


def pair_features_backward(
    emb: EntityEmbeddings, symmetric: bool, d_feat: np.ndarray, pairs: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    m, dim = emb.subject.shape
    if pairs is None:
        ii, jj = np.divmod(np.arange(m * m), m)
    else:
        ii, jj = pairs[:, 0], pairs[:, 1]
    d_left, d_right = d_feat[:, :dim], d_feat[:, dim:]
    if symmetric:
        sign = np.sign(emb.subject[ii] - emb.object[jj])
        d_a = d_left + sign * d_right
        d_b = d_left - sign * d_right
    else:
        d_a, d_b = d_left, d_right
    if pairs is None:
        return d_a.reshape(m, m, dim).sum(axis=1), d_b.reshape(m, m, dim).sum(axis=0)
    return _scatter_rows(ii, m) @ d_a, _scatter_rows(jj, m) @ d_b


def _scatter_rows(index: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((m, len(index)))
    out[index, np.arange(len(index))] = 1.0
    return out


def connection_forward(params: PairnetParams, emb: EntityEmbeddings) -> tuple[np.ndarray, ForwardCache]:
    m = emb.subject.shape[0]
    out, cache = forward(params.head, pair_features(emb, params.symmetric))
    return out.reshape(m, m), cache


def semantic_connection(params: PairnetParams, emb: EntityEmbeddings) -> np.ndarray:
    """m x m matrix of connection strengths in [-1, 1], diagonal included."""
    return connection_forward(params, emb)[0]


def connection_backward(
    params: PairnetParams, emb: EntityEmbeddings, cache: ForwardCache, d_sc: np.ndarray, grads: dict
) -> tuple[np.ndarray, np.ndarray]:
    _, d_feat = backward(params.head, cache, d_sc.reshape(-1, 1), into=grads[id(params.head)])
    return pair_features_backward(emb, params.symmetric, d_feat)


@dataclass
class TrainingTargets:
    m: int
    positive: np.ndarray  # m x m bool, membership in I_t
    relations: dict[tuple[int, int], list[int]]  # R_{i,j} for pairs in I_t

    @property
    def num_positive(self) -> int:
        return int(self.positive.sum())

    @property
    def num_relations(self) -> int:
        return sum(len(r) for r in self.relations.values())

    @classmethod
    def from_scene(cls, scene: Scene) -> "TrainingTargets":
        positive = np.zeros((scene.m, scene.m), dtype=bool)
        rel: dict[tuple[int, int], list[int]] = {}
        for s, p, o in scene.triples:
            positive[s, o] = True
            rel.setdefault((s, o), []).append(p)
        return cls(scene.m, positive, {k: sorted(v) for k, v in sorted(rel.items())})


@dataclass
class ConnectionLossBreakdown:
    loss: float
    weights: np.ndarray  # lambda, m x m
    grad: np.ndarray  # dL/dsc, m x m
    reward_dropped: bool = False


def connection_loss(sc: np.ndarray, targets: TrainingTargets) -> ConnectionLossBreakdown:
    """Pair-weighted binary cross-entropy over all m^2 ordered pairs.

    Each pair carries weight 1/m^2, and related pairs get an extra 1/|I_t|,
    so the weights sum to 2. With no related pairs the extra term is dropped.
    """
    m = targets.m
    if sc.shape != (m, m):
        raise ContractError(f"sc must be {m} x {m}")
    pos = targets.positive
    n_pos = targets.num_positive
    weights = np.full((m, m), 1.0 / (m * m))
    if n_pos:
        weights = weights + pos / n_pos
    clipped = np.clip(sc, -1.0 + SC_CLAMP, 1.0 - SC_CLAMP)
    sign = np.where(pos, 1.0, -1.0)
    arg = (1.0 + sign * clipped) / 2.0
    loss = float(-(weights * np.log(arg)).sum())
    inside = (sc > -1.0 + SC_CLAMP) & (sc < 1.0 - SC_CLAMP)
    grad = -weights * sign / (1.0 + sign * clipped) * inside
    return ConnectionLossBreakdown(loss, weights, grad, reward_dropped=n_pos == 0)


def select_top_pairs(sc: np.ndarray, n: int) -> list[tuple[int, int]]:
    """Up to ``n`` off-diagonal ordered pairs by descending score; ties by (i, j)."""
    if n < 1:
        raise ContractError("N must be >= 1")
    m = sc.shape[0]
    ii, jj = np.divmod(np.arange(m * m), m)
    keep = ii != jj
    ii, jj, vals = ii[keep], jj[keep], sc.reshape(-1)[keep]
    order = np.lexsort((jj, ii, -vals))[:n]
    return [(int(ii[k]), int(jj[k])) for k in order]
