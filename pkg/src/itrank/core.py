"""Core domain types and derived statistics over transfer tables.

All types are immutable after construction and safe to share across
workers; the statistics functions are pure.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.stats import spearmanr

from .errors import SchemaError, StructureError, UnknownIdError


class TaskType(str, enum.Enum):
    CLASSIFICATION = "classification"
    MULTIPLE_CHOICE = "multiple_choice"
    EXTRACTIVE_QA = "extractive_qa"
    TAGGING = "tagging"


class EmbeddingKind(str, enum.Enum):
    TEXT_MEAN = "text_mean"
    SENTENCE = "sentence"
    TASK_FIM = "task_fim"


@dataclass(frozen=True)
class TaskMeta:
    """Identity, type, training-set size and headline metric of one task."""

    id: str
    task_type: TaskType
    train_size: int
    metric_name: str

    def __post_init__(self):
        if not self.id:
            raise SchemaError("task id must be non-empty")
        if self.train_size <= 0:
            raise SchemaError(f"train_size must be positive for {self.id!r}")
        object.__setattr__(self, "task_type", TaskType(self.task_type))


def metas_by_id(metas: Iterable[TaskMeta]) -> dict[str, TaskMeta]:
    out: dict[str, TaskMeta] = {}
    for m in metas:
        if m.id in out:
            raise SchemaError(f"duplicate task id {m.id!r} in manifest")
        out[m.id] = m
    return out


@dataclass(frozen=True)
class TransferTable:
    """Ground-truth target performances for every (intermediate, target) pair.

    ``scores[i, j]`` is the target-task score (0..100) obtained on
    ``targets[j]`` after first training on ``intermediates[i]``;
    ``baseline[t]`` is the score with no intermediate training.
    """

    model_tag: str
    intermediates: tuple[str, ...]
    targets: tuple[str, ...]
    baseline: Mapping[str, float]
    scores: np.ndarray
    _s_index: dict[str, int] = field(init=False, repr=False, compare=False)
    _t_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inter = tuple(self.intermediates)
        targ = tuple(self.targets)
        if len(set(inter)) != len(inter) or len(set(targ)) != len(targ):
            raise SchemaError("duplicate task ids in table axes")
        if set(inter) & set(targ):
            raise SchemaError("intermediate and target id sets must be disjoint")
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.shape != (len(inter), len(targ)):
            raise SchemaError(
                f"score matrix shape {scores.shape} does not match "
                f"{len(inter)} intermediates x {len(targ)} targets")
        if not np.all(np.isfinite(scores)):
            raise SchemaError("score matrix contains non-finite entries")
        if scores.size and (scores.min() < 0.0 or scores.max() > 100.0):
            raise SchemaError("scores must lie in [0, 100]")
        if set(self.baseline) != set(targ):
            missing = set(targ) - set(self.baseline)
            extra = set(self.baseline) - set(targ)
            raise SchemaError(f"baseline row mismatch (missing={sorted(missing)}, "
                              f"extra={sorted(extra)})")
        base = dict(self.baseline)
        for t, v in base.items():
            if not np.isfinite(v) or not (0.0 <= v <= 100.0):
                raise SchemaError(f"baseline score for {t!r} out of range: {v}")
        scores = scores.copy()
        scores.flags.writeable = False
        object.__setattr__(self, "intermediates", inter)
        object.__setattr__(self, "targets", targ)
        object.__setattr__(self, "baseline", base)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "_s_index", {s: i for i, s in enumerate(inter)})
        object.__setattr__(self, "_t_index", {t: j for j, t in enumerate(targ)})

    def score(self, s: str, t: str) -> float:
        return float(self.scores[self.s_pos(s), self.t_pos(t)])

    def column(self, t: str) -> np.ndarray:
        return self.scores[:, self.t_pos(t)]

    def s_pos(self, s: str) -> int:
        try:
            return self._s_index[s]
        except KeyError:
            raise UnknownIdError(s, "not an intermediate of this table") from None

    def t_pos(self, t: str) -> int:
        try:
            return self._t_index[t]
        except KeyError:
            raise UnknownIdError(t, "not a target of this table") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransferTable):
            return NotImplemented
        return (self.model_tag == other.model_tag
                and self.intermediates == other.intermediates
                and self.targets == other.targets
                and self.baseline == other.baseline
                and np.array_equal(self.scores, other.scores))


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-task real vectors of one kind, all sharing one dimensionality."""

    kind: EmbeddingKind
    dim: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "kind", EmbeddingKind(self.kind))
        if self.dim <= 0:
            raise SchemaError("embedding dim must be positive")
        vecs: dict[str, np.ndarray] = {}
        for task_id, v in self.vectors.items():
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise SchemaError(
                    f"vector for {task_id!r} has shape {arr.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"vector for {task_id!r} contains non-finite entries")
            if self.kind is EmbeddingKind.TASK_FIM and arr.min() < 0.0:
                raise SchemaError(
                    f"task_fim vector for {task_id!r} has negative entries")
            arr = arr.copy()
            arr.flags.writeable = False
            vecs[task_id] = arr
        object.__setattr__(self, "vectors", vecs)

    def vector(self, task_id: str) -> np.ndarray:
        try:
            return self.vectors[task_id]
        except KeyError:
            raise UnknownIdError(task_id, "no embedding vector") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (self.kind == other.kind and self.dim == other.dim
                and set(self.vectors) == set(other.vectors)
                and all(np.array_equal(self.vectors[k], other.vectors[k])
                        for k in self.vectors))


@dataclass(frozen=True)
class Ranking:
    """One method's ordered list of intermediate tasks for one target.

    Entries are (task id, method score) with scores non-increasing; ties
    must already be broken deterministically by the producing ranker.
    """

    target: str
    method: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        entries = tuple((str(i), float(s)) for i, s in self.entries)
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"duplicate ids in ranking for {self.target!r}")
        scores = [s for _, s in entries]
        if any(not np.isfinite(s) for s in scores):
            raise SchemaError("ranking scores must be finite")
        if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
            raise SchemaError("ranking scores must be non-increasing")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_scores(cls, target: str, method: str,
                    scores: Mapping[str, float]) -> "Ranking":
        """Build a ranking sorted by score descending, ids ascending on ties."""
        order = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(target=target, method=method, entries=tuple(order))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.entries)

    def rank_of(self, task_id: str) -> int:
        """1-indexed position of a task."""
        for pos, (i, _) in enumerate(self.entries, start=1):
            if i == task_id:
                return pos
        raise UnknownIdError(task_id, f"not ranked for {self.target!r}")


@dataclass(frozen=True)
class GainStats:
    """Aggregate gain/loss statistics over a complete transfer table."""

    positive_count: int
    negative_count: int
    tie_count: int
    mean_relative_gain: float
    benefiting_targets: tuple[str, ...]
    within_type_gain: Mapping[str, float]
    across_type_gain: Mapping[str, float]


def relative_gain(table: TransferTable, s: str, t: str) -> float:
    """Percent change of the transfer score over the no-transfer baseline."""
    score = table.score(s, t)
    base = table.baseline[t]
    return 100.0 * (score - base) / base


def gain_statistics(table: TransferTable, metas: Iterable[TaskMeta]) -> GainStats:
    """Count gains/losses/ties and split mean gains by task-type match.

    A tie is exact floating equality with the baseline.  A target benefits
    when the mean of its transfer column exceeds its baseline.
    """
    by_id = metas if isinstance(metas, dict) else metas_by_id(metas)
    for task_id in (*table.intermediates, *table.targets):
        if task_id not in by_id:
            raise UnknownIdError(task_id, "no metadata entry")

    base = np.array([table.baseline[t] for t in table.targets])
    diffs = table.scores - base[None, :]
    gains = 100.0 * diffs / base[None, :]

    positive = int((diffs > 0).sum())
    negative = int((diffs < 0).sum())
    tie = int((diffs == 0).sum())

    col_means = table.scores.mean(axis=0)
    benefiting = tuple(t for j, t in enumerate(table.targets)
                       if col_means[j] > base[j])

    s_types = np.array([by_id[s].task_type.value for s in table.intermediates])
    within: dict[str, float] = {}
    across: dict[str, float] = {}
    for j, t in enumerate(table.targets):
        same = s_types == by_id[t].task_type.value
        if same.any():
            within[t] = float(gains[same, j].mean())
        if (~same).any():
            across[t] = float(gains[~same, j].mean())

    return GainStats(
        positive_count=positive,
        negative_count=negative,
        tie_count=tie,
        mean_relative_gain=float(gains.mean()),
        benefiting_targets=benefiting,
        within_type_gain=within,
        across_type_gain=across,
    )


def cross_model_spearman(a: TransferTable, b: TransferTable) -> tuple[float, float]:
    """Spearman agreement of two transfer tables over the same task grid.

    Returns (pooled, per_target_mean): the correlation over all flattened
    (intermediate, target) cells, and the mean of per-target-column
    correlations.  Ties receive average ranks.
    """
    if set(a.intermediates) != set(b.intermediates) or set(a.targets) != set(b.targets):
        raise StructureError("tables must share intermediate and target id sets")
    # align b to a's axis order
    s_perm = [b.s_pos(s) for s in a.intermediates]
    t_perm = [b.t_pos(t) for t in a.targets]
    b_scores = b.scores[np.ix_(s_perm, t_perm)]

    pooled = float(spearmanr(a.scores.ravel(), b_scores.ravel()).statistic)
    per_target = [
        float(spearmanr(a.scores[:, j], b_scores[:, j]).statistic)
        for j in range(len(a.targets))
    ]
    return pooled, float(np.mean(per_target))
