"""Relation scores and the deterministic top-k triple ranking."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .scenedata import dumps_line


def relation_score(sc, rp, rc_k, beta: float, use_rp: bool = True):
    """``sc + beta * rp**2 * rc_k``; without the possibility term ``sc + beta * rc_k``."""
    if use_rp:
        return sc + beta * rp * rp * rc_k
    return sc + beta * rc_k


@dataclass(frozen=True)
class ScoredTriple:
    s: int
    o: int
    p: int
    rs: float
    sc: float
    rp: float
    rc: float

    @property
    def key(self) -> tuple[int, int, int]:
        """(subject, predicate, object)"""
        return (self.s, self.p, self.o)


@dataclass
class RankedPredictions:
    scene_id: str
    triples: list[ScoredTriple]

    def top(self, k: int) -> list[tuple[int, int, int]]:
        return [t.key for t in self.triples[:k]]


def rank_triples(
    scene_id: str,
    pairs: np.ndarray,
    sc: np.ndarray,
    rp: np.ndarray,
    rc: np.ndarray,
    beta: float,
    k: int | None = None,
    use_rp: bool = True,
) -> RankedPredictions:
    """Score every (pair, predicate) candidate and keep the best ``k``.

    ``sc`` and ``rp`` hold one value per pair, ``rc`` one row per pair.
    Order: rs descending, then subject, object, predicate ascending.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n = rc.shape[1] if rc.ndim == 2 else 0
    if not len(pairs) or n == 0:
        return RankedPredictions(scene_id, [])
    rs = relation_score(sc[:, None], rp[:, None], rc, beta, use_rp)
    row, pred = np.divmod(np.arange(rs.size), n)
    subj, obj = pairs[row, 0], pairs[row, 1]
    order = np.lexsort((pred, obj, subj, -rs.reshape(-1)))
    if k is not None:
        order = order[:k]
    flat = rs.reshape(-1)
    triples = [
        ScoredTriple(
            int(subj[i]), int(obj[i]), int(pred[i]), float(flat[i]),
            float(sc[row[i]]), float(rp[row[i]]), float(rc[row[i], pred[i]]),
        )
        for i in order
    ]
    return RankedPredictions(scene_id, triples)


def save_predictions(preds: Iterable[RankedPredictions], path: str | Path) -> None:
    lines = []
    for rp_ in preds:
        lines.append(dumps_line({
            "scene_id": rp_.scene_id,
            "triples": [
                {"s": t.s, "o": t.o, "p": t.p, "rs": t.rs, "sc": t.sc, "rp": t.rp, "rc": t.rc}
                for t in rp_.triples
            ],
        }))
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_predictions(path: str | Path) -> list[RankedPredictions]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            triples = [
                ScoredTriple(int(t["s"]), int(t["o"]), int(t["p"]), t["rs"], t["sc"], t["rp"], t["rc"])
                for t in d["triples"]
            ]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad prediction record ({exc})") from exc
        out.append(RankedPredictions(str(d["scene_id"]), triples))
    return out
