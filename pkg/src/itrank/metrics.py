"""Ranking-quality metrics: NDCG, Regret@k, random-baseline expectations,
and aggregation of per-target results into task-type groups.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, log2
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Ranking, TaskMeta, TaskType, TransferTable, metas_by_id
from .errors import DomainError, StructureError, UnknownIdError

REGRET_KS = (1, 3, 5)


def dcg(relevances: Sequence[float]) -> float:
    """Discounted cumulative gain of relevances given in rank order.

    Each position i (1-indexed) contributes (2**rel - 1) / log2(i + 1);
    the whole list is accumulated, i.e. the cut-off is the list length.
    """
    total = 0.0
    for i, rel in enumerate(relevances, start=1):
        rel = float(rel)
        if not np.isfinite(rel) or rel < 0.0:
            raise DomainError(f"relevance at position {i} invalid: {rel}")
        total += (2.0 ** rel - 1.0) / log2(i + 1)
    return total


def _check_ranking_matches(ranking: Ranking, table: TransferTable) -> None:
    if set(ranking.ids) != set(table.intermediates):
        raise StructureError(
            f"ranking for {ranking.target!r} does not cover the table's "
            f"intermediate set")


def ndcg(ranking: Ranking, table: TransferTable) -> float:
    """DCG of the predicted order, normalized by the score-descending ideal.

    Relevance of a task is its raw transfer score for the ranking's target.
    """
    _check_ranking_matches(ranking, table)
    col = table.column(ranking.target)
    predicted = [table.score(s, ranking.target) for s in ranking.ids]
    ideal = sorted(col, reverse=True)
    denom = dcg(ideal)
    if denom == 0.0:
        return 1.0  # all-zero relevance: every order is ideal
    return dcg(predicted) / denom


def regret_at_k(ranking: Ranking, table: TransferTable, k: int) -> float:
    """Relative shortfall (percent) of the best top-k pick vs the optimum."""
    _check_ranking_matches(ranking, table)
    n = len(table.intermediates)
    if not 1 <= k <= n:
        raise DomainError(f"k={k} out of range 1..{n}")
    col = table.column(ranking.target)
    optimum = float(col.max())
    best_of_k = max(table.score(s, ranking.target) for s in ranking.ids[:k])
    return 100.0 * (optimum - best_of_k) / optimum


def expected_random_regret(table: TransferTable, t: str, k: int) -> float:
    """Exact E[Regret@k] under a uniformly random ranking.

    The top k of a uniform random permutation is a uniform random
    k-subset; the item at descending-sorted position r (1-indexed) is the
    subset maximum with probability C(n-r, k-1) / C(n, k).
    """
    col = table.column(t)
    n = len(col)
    if not 1 <= k <= n:
        raise DomainError(f"k={k} out of range 1..{n}")
    xs = np.sort(col)[::-1]
    denom = comb(n, k)
    e_max = sum(xs[r - 1] * comb(n - r, k - 1) for r in range(1, n - k + 2)) / denom
    optimum = float(xs[0])
    return 100.0 * (optimum - e_max) / optimum


def expected_random_ndcg(table: TransferTable, t: str,
                         samples: int, seed: int) -> float:
    """Monte-Carlo mean NDCG over uniformly random rankings of one target.

    Each sample permutation is drawn from its own substream keyed by
    (seed, sample index), so the result depends only on (seed, samples).
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    col = np.asarray(table.column(t))
    n = len(col)
    ideal = dcg(np.sort(col)[::-1])
    if ideal == 0.0:
        return 1.0
    discounts = 1.0 / np.log2(np.arange(2, n + 2))
    gains = 2.0 ** col - 1.0
    total = 0.0
    for i in range(samples):
        perm = np.random.default_rng([seed, i]).permutation(n)
        total += float(gains[perm] @ discounts)
    return total / samples / ideal


@dataclass(frozen=True)
class MetricRow:
    """NDCG plus Regret@k values (percent) for k in REGRET_KS."""

    ndcg: float
    regret: Mapping[int, float]

    def __post_init__(self):
        if not 0.0 < self.ndcg <= 1.0 + 1e-9:
            raise DomainError(f"ndcg must lie in (0, 1], got {self.ndcg}")
        reg = {int(k): float(v) for k, v in self.regret.items()}
        ks = sorted(reg)
        for a, b in zip(ks, ks[1:]):
            if reg[b] > reg[a] + 1e-9:
                raise DomainError("regret must be non-increasing in k")
        if any(v < 0 for v in reg.values()):
            raise DomainError("regret must be non-negative")
        object.__setattr__(self, "regret", reg)


def metric_row(ranking: Ranking, table: TransferTable,
               ks: Sequence[int] = REGRET_KS) -> MetricRow:
    """Evaluate one ranking against the table at the standard cut-offs.

    k larger than the intermediate pool is clamped to the pool size.
    """
    n = len(table.intermediates)
    return MetricRow(
        ndcg=ndcg(ranking, table),
        regret={k: regret_at_k(ranking, table, min(k, n)) for k in ks},
    )


def random_metric_row(table: TransferTable, t: str, samples: int, seed: int,
                      ks: Sequence[int] = REGRET_KS) -> MetricRow:
    """Random-baseline row: exact regret expectation, Monte-Carlo NDCG."""
    n = len(table.intermediates)
    return MetricRow(
        ndcg=expected_random_ndcg(table, t, samples, seed),
        regret={k: expected_random_regret(table, t, min(k, n)) for k in ks},
    )


@dataclass(frozen=True)
class AggregatedReport:
    """Per-target rows plus task-type-group and overall means per method.

    A method's group mean is present only when the method has a row for
    every target of that group; the overall mean only when every group
    is present.
    """

    per_target: Mapping[tuple[str, str], MetricRow]
    per_group: Mapping[tuple[str, TaskType], MetricRow]
    overall: Mapping[str, MetricRow]

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(sorted({m for m, _ in self.per_target}))


def _mean_rows(rows: Sequence[MetricRow]) -> MetricRow:
    ks = sorted(rows[0].regret)
    return MetricRow(
        ndcg=float(np.mean([r.ndcg for r in rows])),
        regret={k: float(np.mean([r.regret[k] for r in rows])) for k in ks},
    )


def aggregate(rows: Mapping[tuple[str, str], MetricRow],
              metas: Iterable[TaskMeta]) -> AggregatedReport:
    """Group per-(method, target) rows by target task type.

    Group and overall rows are unweighted arithmetic means over targets.
    """
    by_id = metas if isinstance(metas, dict) else metas_by_id(metas)
    targets = sorted({t for _, t in rows})
    for t in targets:
        if t not in by_id:
            raise UnknownIdError(t, "no metadata entry for evaluated target")
    methods = sorted({m for m, _ in rows})
    groups: dict[TaskType, list[str]] = {}
    for t in targets:
        groups.setdefault(by_id[t].task_type, []).append(t)

    per_group: dict[tuple[str, TaskType], MetricRow] = {}
    overall: dict[str, MetricRow] = {}
    for m in methods:
        complete = True
        for ty, members in groups.items():
            member_rows = [rows[(m, t)] for t in members if (m, t) in rows]
            if len(member_rows) == len(members):
                per_group[(m, ty)] = _mean_rows(member_rows)
            else:
                complete = False
        if complete:
            overall[m] = _mean_rows([rows[(m, t)] for t in targets])

    return AggregatedReport(per_target=dict(rows), per_group=per_group,
                            overall=overall)
