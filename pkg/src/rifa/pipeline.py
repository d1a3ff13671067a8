"""End-to-end model: training loop, inference and checkpoint bundles."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .nnet import Mlp, make_optimizer, mlp_from_dict, mlp_to_dict, optimizer_step, pack_parameters
from .pairnet import (
    PairnetParams,
    TrainingTargets,
    connection_backward,
    connection_forward,
    connection_loss,
    embed_entities,
    embeddings_backward,
    entity_inputs,
    init_pairnet,
    select_top_pairs,
)
from .relnet import (
    RelnetParams,
    SyntheticContextProvider,
    box_geometry,
    category_code,
    class_loss,
    init_relnet,
    possibility_loss,
    predict_relations,
    relation_boxes,
    relations_backward,
    total_loss,
)
from .scenedata import RunConfig, Scene, Vocab
from .scoring import RankedPredictions, rank_triples

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "rifa-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, scene_id: str):
        super().__init__(f"non-finite loss at epoch {epoch}, scene {scene_id!r}")
        self.epoch = epoch
        self.scene_id = scene_id


@dataclass
class RifaModel:
    config: RunConfig
    pairnet: PairnetParams
    relnet: RelnetParams
    num_categories: int
    feature_dim: int
    vocab_digest: str = ""
    trace: list[dict] = field(default_factory=list)

    def mlps(self) -> list[Mlp]:
        return self.pairnet.mlps() + self.relnet.mlps()

    def arrays(self) -> list[np.ndarray]:
        return [a for mlp in self.mlps() for a in mlp.arrays()]


def infer_feature_dim(scenes: Sequence[Scene]) -> int | None:
    for scene in scenes:
        for e in scene.entities:
            if e.feature is not None:
                return len(e.feature)
    return None


def scene_features(scene: Scene, dim: int) -> np.ndarray:
    """Stored entity features, or the latent-free synthetic stand-in when absent."""
    rows = []
    for e in scene.entities:
        if e.feature is not None:
            rows.append(np.asarray(e.feature, dtype=np.float64))
        else:
            rows.append(category_code(e.category, dim) + 0.5 * box_geometry(np.asarray(e.bbox), dim)[0])
    return np.array(rows).reshape(scene.m, dim)


def init_model(config: RunConfig, vocab: Vocab, feature_dim: int) -> RifaModel:
    rng = np.random.default_rng(config.seed)
    in_dim = vocab.num_categories + 4 + feature_dim
    pn = init_pairnet(
        in_dim, config.embed_dim, rng, config.branch_hidden, config.head_hidden,
        config.hidden_activation, config.symmetric_scorer,
    )
    rn = init_relnet(
        feature_dim, config.embed_dim, vocab.num_predicates, rng, config.rel_hidden,
        config.hidden_activation, config.use_relation_embedding,
        config.use_subject_object_embeddings, config.symmetric_scorer,
    )
    return RifaModel(config, pn, rn, vocab.num_categories, feature_dim, vocab.digest())


@dataclass
class PreparedScene:
    scene: Scene
    inputs: np.ndarray
    context: np.ndarray | None  # m*m x F_rel, row-major over ordered pairs
    targets: TrainingTargets


def prepare_scene(model: RifaModel, scene: Scene) -> PreparedScene:
    inputs = entity_inputs(scene, model.num_categories, scene_features(scene, model.feature_dim))
    context = None
    if model.relnet.use_relation_embedding:
        m = scene.m
        ii, jj = np.divmod(np.arange(m * m), m)
        provider = SyntheticContextProvider(scene, model.relnet.context_dim)
        context = provider.features(relation_boxes(scene.boxes(), np.stack([ii, jj], axis=1)))
    return PreparedScene(scene, inputs, context, TrainingTargets.from_scene(scene))


def _context_rows(prep: PreparedScene, pairs: np.ndarray) -> np.ndarray | None:
    if prep.context is None:
        return None
    return prep.context[pairs[:, 0] * prep.scene.m + pairs[:, 1]]


def scene_loss(
    model: RifaModel, prep: PreparedScene, grads: dict | None = None
) -> tuple[float, float, float]:
    """Forward pass and the three loss terms for one scene.

    When ``grads`` (keyed by ``id(mlp)``) is given, gradients of the total
    loss are accumulated into it. The relation network runs on the top-N
    proposals plus any related pair the proposals missed.
    """
    cfg = model.config
    pn, rn = model.pairnet, model.relnet
    targets = prep.targets
    emb = embed_entities(pn, prep.inputs)
    sc, head_cache = connection_forward(pn, emb)
    b_sc = connection_loss(sc, targets)

    proposed = select_top_pairs(sc, cfg.top_n)
    chosen = set(proposed)
    forced = [pair for pair in targets.relations if pair not in chosen]
    pairs = np.array(proposed + forced, dtype=np.int64).reshape(-1, 2)
    if not len(pairs):  # single-entity scene: only the connection loss applies
        if grads is not None:
            d_subject, d_object = connection_backward(pn, emb, head_cache, b_sc.grad, grads)
            embeddings_backward(pn, emb, d_subject, d_object, grads)
        return b_sc.loss, 0.0, 0.0
    pred = predict_relations(rn, pairs, emb, _context_rows(prep, pairs))
    l_rp, d_rp = 0.0, None
    if cfg.use_relation_possibility:
        b_rp = possibility_loss(pred.rp, targets.positive[pairs[:, 0], pairs[:, 1]])
        l_rp, d_rp = b_rp.loss, b_rp.grad
    l_rc, d_rc = class_loss(pred.rc, pairs, targets)

    if grads is not None:
        d_subject, d_object = connection_backward(pn, emb, head_cache, b_sc.grad, grads)
        back = relations_backward(rn, emb, pred, d_rp, d_rc, grads)
        if back is not None:
            d_subject = d_subject + back[0]
            d_object = d_object + back[1]
        embeddings_backward(pn, emb, d_subject, d_object, grads)
    return b_sc.loss, l_rp, l_rc


def zero_grad_dict(model: RifaModel) -> dict:
    return {id(mlp): [np.zeros_like(a) for a in mlp.arrays()] for mlp in model.mlps()}


def flat_grads(model: RifaModel, grads: dict) -> list[np.ndarray]:
    return [g for mlp in model.mlps() for g in grads[id(mlp)]]


def _epoch_means(losses: np.ndarray, epoch: int) -> dict:
    l_sc, l_rp, l_rc = (float(v) for v in losses.mean(axis=0))
    return {"epoch": epoch, "l_sc": l_sc, "l_rp": l_rp, "l_rc": l_rc, "total": total_loss(l_sc, l_rp, l_rc)}


def train(config: RunConfig, scenes: Sequence[Scene], vocab: Vocab) -> RifaModel:
    """Fit a model, one optimizer step per scene.

    ``model.trace`` holds per-epoch mean losses; entry 0 is measured before
    any update.
    """
    feature_dim = config.feature_dim or infer_feature_dim(scenes) or 16
    model = init_model(config, vocab, feature_dim)
    prepared = [prepare_scene(model, s) for s in scenes]
    flat, grads = pack_parameters(model.mlps())
    opt = make_optimizer([flat], config.optimizer, config.lr)
    rng = np.random.default_rng([config.seed, 1])

    losses = np.zeros((len(prepared), 3))
    for idx, prep in enumerate(prepared):
        losses[idx] = scene_loss(model, prep)
    model.trace.append(_epoch_means(losses, 0))
    for epoch in range(1, config.epochs + 1):
        for idx in rng.permutation(len(prepared)):
            prep = prepared[idx]
            grads["flat"].fill(0.0)
            losses[idx] = scene_loss(model, prep, grads)
            if not np.isfinite(losses[idx]).all():
                raise TrainingDiverged(epoch, prep.scene.scene_id)
            optimizer_step(opt, [flat], [grads["flat"]])
        model.trace.append(_epoch_means(losses, epoch))
        log.info("epoch %d: %s", epoch, model.trace[-1])
    return model


@dataclass
class SceneOutputs:
    pairs: np.ndarray
    sc: np.ndarray  # per proposed pair
    rp: np.ndarray
    rc: np.ndarray


def scene_outputs(model: RifaModel, scene: Scene, top_n: int | None = None) -> SceneOutputs:
    prep = prepare_scene(model, scene)
    emb = embed_entities(model.pairnet, prep.inputs)
    sc, _ = connection_forward(model.pairnet, emb)
    pairs = np.array(select_top_pairs(sc, top_n or model.config.top_n), dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        n = model.relnet.num_predicates
        return SceneOutputs(pairs, np.zeros(0), np.zeros(0), np.zeros((0, n)))
    pred = predict_relations(model.relnet, pairs, emb, _context_rows(prep, pairs))
    return SceneOutputs(pairs, sc[pairs[:, 0], pairs[:, 1]], pred.rp, pred.rc)


def predict_scene(
    model: RifaModel,
    scene: Scene,
    k: int | None = 100,
    beta: float | None = None,
    top_n: int | None = None,
    rc_override: np.ndarray | None = None,
) -> RankedPredictions:
    """Ranked triples for one scene. ``rc_override`` (length n) replaces the
    predicted class distribution for every pair, e.g. with a frequency prior."""
    out = scene_outputs(model, scene, top_n)
    rc = out.rc if rc_override is None else np.tile(rc_override, (len(out.pairs), 1))
    return rank_triples(
        scene.scene_id, out.pairs, out.sc, out.rp, rc,
        beta if beta is not None else model.config.beta, k,
        use_rp=model.config.use_relation_possibility,
    )


def predict_dataset(model: RifaModel, scenes: Sequence[Scene], k: int | None = 100, workers: int = 1, **kw) -> list[RankedPredictions]:
    if workers <= 1:
        return [predict_scene(model, s, k, **kw) for s in scenes]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: predict_scene(model, s, k, **kw), scenes))


def checkpoint_dict(model: RifaModel, provenance: dict | None = None) -> dict:
    pn, rn = model.pairnet, model.relnet
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "num_categories": model.num_categories,
        "feature_dim": model.feature_dim,
        "vocab_digest": model.vocab_digest,
        "pairnet": {
            "symmetric": pn.symmetric,
            "subject": mlp_to_dict(pn.subject),
            "object": None if pn.symmetric else mlp_to_dict(pn.object),
            "head": mlp_to_dict(pn.head),
        },
        "relnet": {
            "context_dim": rn.context_dim,
            "embed_dim": rn.embed_dim,
            "use_relation_embedding": rn.use_relation_embedding,
            "use_subject_object_embeddings": rn.use_subject_object_embeddings,
            "symmetric": rn.symmetric,
            "trunk": mlp_to_dict(rn.trunk),
            "possibility": mlp_to_dict(rn.possibility),
            "classes": mlp_to_dict(rn.classes),
        },
        "trace": model.trace,
        "provenance": provenance or {},
    }


def model_from_dict(d: dict) -> RifaModel:
    if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a version-1 rifa checkpoint")
    p, r = d["pairnet"], d["relnet"]
    subject = mlp_from_dict(p["subject"])
    obj = subject if p["symmetric"] else mlp_from_dict(p["object"])
    pn = PairnetParams(subject, obj, mlp_from_dict(p["head"]), p["symmetric"])
    rn = RelnetParams(
        mlp_from_dict(r["trunk"]), mlp_from_dict(r["possibility"]), mlp_from_dict(r["classes"]),
        r["context_dim"], r["embed_dim"], r["use_relation_embedding"],
        r["use_subject_object_embeddings"], r["symmetric"],
    )
    return RifaModel(
        RunConfig.from_dict(d["config"]), pn, rn, d["num_categories"], d["feature_dim"],
        d.get("vocab_digest", ""), list(d.get("trace", [])),
    )


def save_checkpoint(model: RifaModel, path: str | Path, provenance: dict | None = None) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model, provenance), sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> RifaModel:
    return model_from_dict(json.loads(Path(path).read_text()))
