"""Seeded synthetic scenes with geometry-driven relations.

The image is split into a ``grid x grid`` array of cells. Each relation
instance places a subject and an object inside one free cell so that their
boxes satisfy the rule's geometric trigger; entities in different cells
never satisfy any trigger. Some cells receive decoy pairs (two boxes that
satisfy no trigger) or a lone entity.

Property structure holds exactly by construction: a symmetric instance
annotates both directions, an inverse instance annotates ``(s, p, o)`` and
``(o, q, s)``, and an asymmetric instance annotates one direction only.
Predicate frequencies follow weights proportional to ``rank ** -zipf``
(inverse partners share the mean of their two weights, since they always
occur together).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .relnet import box_geometry, category_code
from .scenedata import BBox, Entity, Scene, Triple, Vocab

TRIGGERS = ("above", "below", "beside", "inside", "contains", "overlap_small", "overlap_equal")
MIRROR = {"above": "below", "below": "above", "inside": "contains", "contains": "inside"}
ORDER_INVARIANT = ("beside", "overlap_equal")
CELL_MARGIN = 0.1


@dataclass(frozen=True)
class PredicateRule:
    name: str
    kind: str  # asymmetric | symmetric | inverse
    trigger: str
    partner: str | None = None  # inverse partner's name
    mark: int | None = None  # context mark drawn inside the relation box
    weight: float | None = None  # overrides the rank-based long-tail weight


STANDARD_RULES = (
    PredicateRule("on", "asymmetric", "overlap_small", mark=0),
    PredicateRule("near", "symmetric", "beside"),
    PredicateRule("above", "inverse", "above", partner="under"),
    PredicateRule("under", "inverse", "below", partner="above"),
    PredicateRule("holding", "asymmetric", "overlap_small", mark=1),
    PredicateRule("in", "asymmetric", "inside"),
    PredicateRule("with", "symmetric", "overlap_equal", mark=2),
    PredicateRule("has", "asymmetric", "contains", mark=3),
)

ASYMMETRY_RULES = (
    PredicateRule("above", "asymmetric", "above"),
    PredicateRule("near", "symmetric", "beside"),
    PredicateRule("with", "symmetric", "overlap_equal"),
)


@dataclass
class GenConfig:
    n_scenes: int = 200
    entities_min: int = 8
    entities_max: int = 16
    num_categories: int = 10
    feature_dim: int = 16
    rules: tuple[PredicateRule, ...] = STANDARD_RULES
    zipf: float = 1.0
    decoy_rate: float = 0.25
    grid: int = 4
    seed: int = 0

    def __post_init__(self):
        self.rules = tuple(r if isinstance(r, PredicateRule) else PredicateRule(**r) for r in self.rules)
        self.validate()

    def validate(self) -> None:
        if self.n_scenes < 1 or self.num_categories < 1 or self.feature_dim < 1 or self.grid < 1:
            raise ValueError("counts must be positive")
        if not 2 <= self.entities_min <= self.entities_max:
            raise ValueError("need 2 <= entities_min <= entities_max")
        if (self.entities_max + 1) // 2 > self.grid * self.grid:
            raise ValueError("grid has too few cells for entities_max")
        if self.zipf < 0 or not 0 <= self.decoy_rate < 1:
            raise ValueError("zipf must be >= 0 and decoy_rate in [0, 1)")
        if not self.rules:
            raise ValueError("at least one predicate rule is required")
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            raise ValueError("rule names must be unique")
        by_name = {r.name: r for r in self.rules}
        for r in self.rules:
            if r.trigger not in TRIGGERS:
                raise ValueError(f"rule {r.name}: unknown trigger {r.trigger!r}")
            if r.kind == "symmetric" and r.trigger not in ORDER_INVARIANT:
                raise ValueError(f"rule {r.name}: symmetric rules need an order-invariant trigger")
            if r.kind == "asymmetric" and r.trigger in ORDER_INVARIANT:
                raise ValueError(f"rule {r.name}: asymmetric rules need a directional trigger")
            if r.kind == "inverse":
                q = by_name.get(r.partner)
                if q is None or q.kind != "inverse" or q.partner != r.name:
                    raise ValueError(f"rule {r.name}: inverse partner must name it back")
                if MIRROR.get(r.trigger) != q.trigger:
                    raise ValueError(f"rule {r.name}: inverse partner needs the mirrored trigger")
            elif r.kind not in ("asymmetric", "symmetric"):
                raise ValueError(f"rule {r.name}: unknown kind {r.kind!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rules"] = [asdict(r) for r in self.rules]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        if "rules" in d:
            d["rules"] = tuple(PredicateRule(**r) for r in d["rules"])
        return cls(**d)


def make_vocab(cfg: GenConfig) -> Vocab:
    idx = {r.name: i for i, r in enumerate(cfg.rules)}
    inverse = []
    for i, r in enumerate(cfg.rules):
        if r.kind == "inverse" and i < idx[r.partner]:
            inverse.append((i, idx[r.partner]))
    return Vocab(
        categories=[f"cat{c}" for c in range(cfg.num_categories)],
        predicates=[r.name for r in cfg.rules],
        asymmetric=[i for i, r in enumerate(cfg.rules) if r.kind == "asymmetric"],
        symmetric=[i for i, r in enumerate(cfg.rules) if r.kind == "symmetric"],
        inverse=inverse,
    )


def predicate_weights(cfg: GenConfig) -> np.ndarray:
    """Target share of triples per predicate (sums to 1)."""
    n = len(cfg.rules)
    w = np.array([
        r.weight if r.weight is not None else (rank + 1.0) ** -cfg.zipf
        for rank, r in enumerate(cfg.rules)
    ])
    idx = {r.name: i for i, r in enumerate(cfg.rules)}
    shared = w.copy()
    for i, r in enumerate(cfg.rules):
        if r.kind == "inverse":
            shared[i] = (w[i] + w[idx[r.partner]]) / 2
    return shared / shared.sum() if n else shared


def _instance_units(cfg: GenConfig) -> tuple[list[int], np.ndarray]:
    """Rules that can be sampled as an instance and their sampling weights.

    Weights are per triple, so two-triple instances (symmetric, inverse
    pair) are down-weighted accordingly.
    """
    w = predicate_weights(cfg)
    idx = {r.name: i for i, r in enumerate(cfg.rules)}
    units, probs = [], []
    for i, r in enumerate(cfg.rules):
        if r.kind == "asymmetric":
            units.append(i)
            probs.append(w[i])
        elif r.kind == "symmetric":
            units.append(i)
            probs.append(w[i] / 2)
        elif i < idx[r.partner]:
            # one instance yields one triple of each partner
            units.append(i)
            probs.append(w[i])
    probs = np.array(probs)
    return units, probs / probs.sum()


def _u(rng, lo, hi):
    return float(rng.uniform(lo, hi))


def _place_above(rng):
    """Subject directly above object with horizontal overlap and a small gap."""
    while True:
        ws, wo = _u(rng, 0.3, 0.6), _u(rng, 0.3, 0.6)
        hs, ho = _u(rng, 0.2, 0.35), _u(rng, 0.2, 0.35)
        gap = _u(rng, 0.03, 0.1)
        y0 = _u(rng, 0.0, 1.0 - (hs + gap + ho))
        xs = _u(rng, 0.0, 1.0 - ws)
        xo = min(max(xs + ws / 2 + _u(rng, -0.15, 0.15) - wo / 2, 0.0), 1.0 - wo)
        overlap = min(xs + ws, xo + wo) - max(xs, xo)
        if overlap >= 0.5 * min(ws, wo):
            s = (xs, y0, xs + ws, y0 + hs)
            o = (xo, y0 + hs + gap, xo + wo, y0 + hs + gap + ho)
            return s, o


def _transpose(box):
    return (box[1], box[0], box[3], box[2])


def _place_inside(rng):
    """Small subject box fully inside a large object box."""
    wo, ho = _u(rng, 0.5, 0.9), _u(rng, 0.5, 0.9)
    xo, yo = _u(rng, 0.0, 1.0 - wo), _u(rng, 0.0, 1.0 - ho)
    ws, hs = wo * _u(rng, 0.2, 0.45), ho * _u(rng, 0.2, 0.45)
    pad_x, pad_y = 0.05 * wo, 0.05 * ho
    xs = _u(rng, xo + pad_x, xo + wo - pad_x - ws)
    ys = _u(rng, yo + pad_y, yo + ho - pad_y - hs)
    return (xs, ys, xs + ws, ys + hs), (xo, yo, xo + wo, yo + ho)


def _place_overlap_small(rng):
    """Small subject straddling the top edge of a large object."""
    wo, ho = _u(rng, 0.45, 0.7), _u(rng, 0.4, 0.6)
    ws, hs = _u(rng, 0.15, 0.25), _u(rng, 0.15, 0.25)
    xo = _u(rng, 0.0, 1.0 - wo)
    yo = _u(rng, hs * 0.6, 1.0 - ho)
    cx = _u(rng, xo + ws / 2, xo + wo - ws / 2)
    cy = yo + _u(rng, -0.05, 0.05)
    xs = min(max(cx - ws / 2, 0.0), 1.0 - ws)
    ys = min(max(cy - hs / 2, 0.0), 1.0 - hs)
    return (xs, ys, xs + ws, ys + hs), (xo, yo, xo + wo, yo + ho)


def _place_overlap_equal(rng):
    """Two similar boxes partially overlapping along both axes."""
    w, h = _u(rng, 0.35, 0.5), _u(rng, 0.35, 0.5)
    w2, h2 = w * _u(rng, 0.85, 1.15), h * _u(rng, 0.85, 1.15)
    dx, dy = w * _u(rng, 0.25, 0.5), h * _u(rng, 0.25, 0.5)
    x0 = _u(rng, 0.0, 1.0 - dx - max(w, w2))
    y0 = _u(rng, 0.0, 1.0 - dy - max(h, h2))
    a = (x0, y0, x0 + w, y0 + h)
    b = (x0 + dx, y0 + dy, x0 + dx + w2, y0 + dy + h2)
    if rng.random() < 0.5:  # flip along x so the offset direction varies
        a = (1 - a[2], a[1], 1 - a[0], a[3])
        b = (1 - b[2], b[1], 1 - b[0], b[3])
    return (a, b) if rng.random() < 0.5 else (b, a)


def _place_decoy(rng):
    """Two boxes in opposite quadrants: no axis overlap, no trigger."""
    a = (_u(rng, 0.0, 0.1), _u(rng, 0.0, 0.1))
    b = (_u(rng, 0.55, 0.65), _u(rng, 0.55, 0.65))
    wa, ha = _u(rng, 0.2, 0.35), _u(rng, 0.2, 0.35)
    wb, hb = _u(rng, 0.2, 0.35), _u(rng, 0.2, 0.35)
    box_a = (a[0], a[1], a[0] + wa, a[1] + ha)
    box_b = (b[0], b[1], b[0] + wb, b[1] + hb)
    if rng.random() < 0.5:
        box_a = (1 - box_a[2], box_a[1], 1 - box_a[0], box_a[3])
        box_b = (1 - box_b[2], box_b[1], 1 - box_b[0], box_b[3])
    return (box_a, box_b) if rng.random() < 0.5 else (box_b, box_a)


def place(trigger: str, rng: np.random.Generator):
    """Local (cell-relative, unit square) subject and object boxes for a trigger."""
    if trigger == "above":
        return _place_above(rng)
    if trigger == "below":
        s, o = _place_above(rng)
        return o, s
    if trigger == "beside":
        s, o = _place_above(rng)
        s, o = _transpose(s), _transpose(o)
        return (s, o) if rng.random() < 0.5 else (o, s)
    if trigger == "inside":
        return _place_inside(rng)
    if trigger == "contains":
        s, o = _place_inside(rng)
        return o, s
    if trigger == "overlap_small":
        return _place_overlap_small(rng)
    if trigger == "overlap_equal":
        return _place_overlap_equal(rng)
    if trigger == "decoy":
        return _place_decoy(rng)
    raise ValueError(f"unknown trigger {trigger!r}")


def trigger_holds(trigger: str, s: BBox, o: BBox) -> bool:
    """Geometric test matching :func:`place`; used to audit generated scenes."""
    def hov(a, b):
        return min(a[2], b[2]) - max(a[0], b[0])

    def vov(a, b):
        return min(a[3], b[3]) - max(a[1], b[1])

    def inside(a, b):
        return a[0] >= b[0] and a[1] >= b[1] and a[2] <= b[2] and a[3] <= b[3]

    if trigger == "above":
        return hov(s, o) > 0 and s[3] <= o[1]
    if trigger == "below":
        return trigger_holds("above", o, s)
    if trigger == "beside":
        return vov(s, o) > 0 and (s[2] <= o[0] or o[2] <= s[0])
    if trigger == "inside":
        return inside(s, o)
    if trigger == "contains":
        return inside(o, s)
    if trigger in ("overlap_small", "overlap_equal"):
        partial = hov(s, o) > 0 and vov(s, o) > 0 and not inside(s, o) and not inside(o, s)
        if trigger == "overlap_equal":
            return partial
        area = lambda b: (b[2] - b[0]) * (b[3] - b[1])
        return partial and area(s) < area(o)
    raise ValueError(f"unknown trigger {trigger!r}")


def _to_image(local, cell: int, grid: int) -> BBox:
    size = 1.0 / grid
    cx, cy = (cell % grid) * size, (cell // grid) * size
    inner = 1.0 - 2 * CELL_MARGIN
    x1, y1, x2, y2 = local
    return BBox(
        cx + size * (CELL_MARGIN + inner * x1),
        cy + size * (CELL_MARGIN + inner * y1),
        cx + size * (CELL_MARGIN + inner * x2),
        cy + size * (CELL_MARGIN + inner * y2),
    )


def entity_feature(category: int, bbox: BBox, latent: np.ndarray) -> np.ndarray:
    """Visual feature stand-in: category appearance + box geometry + scene latent."""
    dim = len(latent)
    return category_code(category, dim) + 0.5 * box_geometry(np.asarray(bbox), dim)[0] + 0.3 * latent


def generate_scene(cfg: GenConfig, index: int) -> Scene:
    rng = np.random.default_rng([cfg.seed, index])
    idx = {r.name: i for i, r in enumerate(cfg.rules)}
    units, probs = _instance_units(cfg)
    m = int(rng.integers(cfg.entities_min, cfg.entities_max + 1))
    cells = rng.permutation(cfg.grid * cfg.grid)
    latent = rng.normal(size=cfg.feature_dim)

    boxes: list[BBox] = []
    triples: list[tuple[int, int, int]] = []
    marks: list[list[float]] = []
    for slot in range(m // 2):
        cell = int(cells[slot])
        if rng.random() < cfg.decoy_rate:
            a, b = place("decoy", rng)
            boxes += [_to_image(a, cell, cfg.grid), _to_image(b, cell, cfg.grid)]
            continue
        p = units[int(rng.choice(len(units), p=probs))]
        rule = cfg.rules[p]
        s_local, o_local = place(rule.trigger, rng)
        s, o = len(boxes), len(boxes) + 1
        boxes += [_to_image(s_local, cell, cfg.grid), _to_image(o_local, cell, cfg.grid)]
        triples.append((s, p, o))
        if rule.kind == "symmetric":
            triples.append((o, p, s))
        elif rule.kind == "inverse":
            triples.append((o, idx[rule.partner], s))
        if rule.mark is not None:
            rb = boxes[s], boxes[o]
            mx = (min(rb[0].x1, rb[1].x1) + max(rb[0].x2, rb[1].x2)) / 2
            my = (min(rb[0].y1, rb[1].y1) + max(rb[0].y2, rb[1].y2)) / 2
            marks.append([mx, my, float(rule.mark)])
    if m % 2:
        cell = int(cells[m // 2])
        w, h = _u(rng, 0.2, 0.5), _u(rng, 0.2, 0.5)
        x, y = _u(rng, 0.0, 1.0 - w), _u(rng, 0.0, 1.0 - h)
        boxes.append(_to_image((x, y, x + w, y + h), cell, cfg.grid))

    # shuffle so entity index carries no information about roles
    perm = rng.permutation(m)
    new_of_old = np.empty(m, dtype=np.int64)
    new_of_old[perm] = np.arange(m)
    categories = rng.integers(0, cfg.num_categories, size=m)
    entities = []
    for new in range(m):
        old = int(perm[new])
        cat = int(categories[new])
        entities.append(Entity(cat, boxes[old], entity_feature(cat, boxes[old], latent)))
    remapped = sorted(Triple(int(new_of_old[s]), p, int(new_of_old[o])) for s, p, o in triples)
    context = {"latent": latent.tolist(), "marks": marks}
    return Scene(f"syn{cfg.seed}-{index:05d}", entities, remapped, context)


def generate_dataset(cfg: GenConfig) -> tuple[list[Scene], Vocab]:
    cfg.validate()
    return [generate_scene(cfg, i) for i in range(cfg.n_scenes)], make_vocab(cfg)


def drop_reverse_forms(scenes: list[Scene], vocab: Vocab, seed: int = 0, keep: float = 0.0) -> list[Scene]:
    """Remove one triple of each symmetric or inverse couple with probability ``1 - keep``.

    Mimics datasets where the symmetric or inverse form of an annotation is
    usually missing. Which member of a couple survives is random.
    """
    rng = np.random.default_rng(seed)
    sym = set(vocab.symmetric)
    partners = vocab.inverse_partners()
    out = []
    for scene in scenes:
        present = set(scene.triples)
        dropped: set[Triple] = set()
        for t in scene.triples:
            if t in dropped:
                continue
            s, p, o = t
            mates = []
            if p in sym:
                mates.append(Triple(o, p, s))
            mates += [Triple(o, q, s) for q in sorted(partners.get(p, ()))]
            for mate in mates:
                if mate in present and mate not in dropped and t not in dropped and mate > t:
                    if rng.random() >= keep:
                        dropped.add(t if rng.random() < 0.5 else mate)
        out.append(replace(scene, triples=[t for t in scene.triples if t not in dropped]))
    return out


def standard_config(seed: int = 0, n_scenes: int = 200, zipf: float = 1.0, **kw) -> GenConfig:
    return GenConfig(n_scenes=n_scenes, zipf=zipf, seed=seed, **kw)


def asymmetry_config(seed: int = 0, n_scenes: int = 200, **kw) -> GenConfig:
    kw.setdefault("zipf", 0.0)
    return GenConfig(n_scenes=n_scenes, rules=ASYMMETRY_RULES, seed=seed, **kw)
