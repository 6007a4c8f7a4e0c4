"""Selection methods that order candidate intermediate tasks for a target.

Every ranker returns a ``Ranking`` whose entries are a permutation of the
requested intermediate ids, sorted by method score descending with
lexicographic id tie-breaking.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import EmbeddingSet, Ranking, TaskMeta, TaskType, metas_by_id
from .errors import DomainError, SchemaError, StructureError, UnknownIdError
from .rng import substream


class MethodKind(str, enum.Enum):
    RANDOM = "random"
    SIZE = "size"
    EMBEDDING_COSINE = "embedding_cosine"
    SCORE_TABLE = "score_table"
    FUSED = "fused"


_REQUIRED_PARAMS = {
    MethodKind.RANDOM: {"seed"},
    MethodKind.SIZE: set(),
    MethodKind.EMBEDDING_COSINE: {"embedding"},
    MethodKind.SCORE_TABLE: {"source"},
    MethodKind.FUSED: {"components"},
}


@dataclass(frozen=True)
class MethodSpec:
    """Named selection method plus the parameters its kind requires."""

    name: str
    kind: MethodKind
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        kind = MethodKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", dict(self.params))
        missing = _REQUIRED_PARAMS[kind] - set(self.params)
        if missing:
            raise SchemaError(
                f"method {self.name!r} ({kind.value}) missing params: {sorted(missing)}")


def rank_by_size(metas: Iterable[TaskMeta], intermediates: Sequence[str],
                 target: str) -> Ranking:
    """Largest training set first; the method score is the training size."""
    by_id = metas if isinstance(metas, dict) else metas_by_id(metas)
    scores = {}
    for s in intermediates:
        if s not in by_id:
            raise UnknownIdError(s, "no metadata entry")
        scores[s] = float(by_id[s].train_size)
    return Ranking.from_scores(target, "size", scores)


def rank_random(intermediates: Sequence[str], target: str, seed: int) -> Ranking:
    """Uniformly random order, reproducible per (seed, target, id set)."""
    ids = sorted(intermediates)
    rng = substream(seed, "rank_random", target, *ids)
    draws = rng.random(len(ids))
    return Ranking.from_scores(target, "random",
                               {s: float(u) for s, u in zip(ids, draws)})


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def rank_by_cosine(embeddings: EmbeddingSet, intermediates: Sequence[str],
                   target: str, method: str | None = None) -> Ranking:
    """Cosine similarity of each intermediate's vector to the target's."""
    tv = embeddings.vector(target)
    if not np.linalg.norm(tv):
        raise DomainError(f"zero-norm embedding for {target!r}")
    scores = {}
    for s in intermediates:
        v = embeddings.vector(s)
        if not np.linalg.norm(v):
            raise DomainError(f"zero-norm embedding for {s!r}")
        scores[s] = cosine(v, tv)
    return Ranking.from_scores(target, method or embeddings.kind.value, scores)


def rank_by_scores(scores: Mapping[str, float], target: str,
                   method: str = "scores") -> Ranking:
    """Order by externally supplied per-intermediate scores, descending."""
    for s, v in scores.items():
        if not np.isfinite(v):
            raise SchemaError(f"score for {s!r} is not finite: {v}")
    return Ranking.from_scores(target, method, dict(scores))


def type_prerank(ranking: Ranking, metas: Iterable[TaskMeta],
                 target_type: TaskType) -> Ranking:
    """Stably move intermediates of the target's task type to the front.

    Relative order inside each block is preserved.  Scores are replaced
    by descending position ranks because the original method scores are
    no longer monotone over the reordered list.
    """
    by_id = metas if isinstance(metas, dict) else metas_by_id(metas)
    target_type = TaskType(target_type)
    for s in ranking.ids:
        if s not in by_id:
            raise UnknownIdError(s, "no metadata entry")
    same = [s for s in ranking.ids if by_id[s].task_type == target_type]
    other = [s for s in ranking.ids if by_id[s].task_type != target_type]
    ordered = same + other
    n = len(ordered)
    return Ranking(target=ranking.target, method=ranking.method + "+type",
                   entries=tuple((s, float(n - i)) for i, s in enumerate(ordered)))


def rrf_fuse(rankings: Sequence[Ranking], c: float = 60.0) -> Ranking:
    """Reciprocal rank fusion: score(d) = sum over rankings of 1/(c + rank(d)).

    Ranks are 1-indexed; the fusion constant c defaults to 60.
    """
    if len(rankings) < 2:
        raise StructureError("rank fusion needs at least two rankings")
    if c <= 0:
        raise DomainError("fusion constant must be positive")
    first = rankings[0]
    ids = set(first.ids)
    for r in rankings[1:]:
        if set(r.ids) != ids:
            raise StructureError("rankings to fuse must cover identical id sets")
        if r.target != first.target:
            raise StructureError("rankings to fuse must share one target")
    fused: dict[str, float] = {s: 0.0 for s in ids}
    for r in rankings:
        for pos, (s, _) in enumerate(r.entries, start=1):
            fused[s] += 1.0 / (c + pos)
    method = "+".join(r.method for r in rankings)
    return Ranking.from_scores(first.target, method, fused)
