"""Parsing and serialization of the artifact file formats.

Transfer tables and manifests travel as UTF-8 TSV; embedding sets,
embedded datasets, rankings and reports as JSON lines.  Parsers enforce
every type invariant, reporting the offending line where possible, and
``parse(serialize(x)) == x`` for every format.
"""
from __future__ import annotations

import json
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (EmbeddingKind, EmbeddingSet, Ranking, TaskMeta, TaskType,
                   TransferTable)
from .errors import SchemaError
from .metrics import AggregatedReport, MetricRow
from .proxies import EmbeddedDataset, LabelKind

BASELINE_ROW_ID = "__baseline__"


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_float(text: str, line_no: int, col: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise SchemaError(f"line {line_no}, column {col}: "
                          f"non-numeric cell {text!r}") from None
    if not math.isfinite(v):
        raise SchemaError(f"line {line_no}, column {col}: non-finite cell")
    return v


# -- transfer tables ---------------------------------------------------------

def parse_transfer_table(text: str) -> TransferTable:
    """Parse a TSV transfer table.

    The header row holds the model tag followed by the target ids; the
    first data row must be the reserved ``__baseline__`` (no-transfer)
    row; every following row is one intermediate task.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3:
        raise SchemaError("transfer table needs a header, a baseline row "
                          "and at least one intermediate row")
    header = lines[0].split("\t")
    model_tag, targets = header[0], header[1:]
    if not targets:
        raise SchemaError("header row lists no targets")
    width = len(header)

    def cells(ln: str, line_no: int) -> list[str]:
        parts = ln.split("\t")
        if len(parts) != width:
            raise SchemaError(f"line {line_no}: expected {width} cells, "
                              f"got {len(parts)}")
        return parts

    base_cells = cells(lines[1], 2)
    if base_cells[0] != BASELINE_ROW_ID:
        raise SchemaError(f"line 2: first data row must be {BASELINE_ROW_ID!r}, "
                          f"got {base_cells[0]!r}")
    baseline = {t: _parse_float(v, 2, j + 2)
                for j, (t, v) in enumerate(zip(targets, base_cells[1:]))}

    intermediates: list[str] = []
    rows: list[list[float]] = []
    for line_no, ln in enumerate(lines[2:], start=3):
        parts = cells(ln, line_no)
        if parts[0] in intermediates or parts[0] == BASELINE_ROW_ID:
            raise SchemaError(f"line {line_no}: duplicate row id {parts[0]!r}")
        intermediates.append(parts[0])
        rows.append([_parse_float(v, line_no, j + 2)
                     for j, v in enumerate(parts[1:])])
    return TransferTable(model_tag=model_tag, intermediates=tuple(intermediates),
                         targets=tuple(targets), baseline=baseline,
                         scores=np.array(rows))


def serialize_transfer_table(table: TransferTable) -> str:
    out = [table.model_tag + "\t" + "\t".join(table.targets)]
    out.append(BASELINE_ROW_ID + "\t"
               + "\t".join(_fmt(table.baseline[t]) for t in table.targets))
    for i, s in enumerate(table.intermediates):
        out.append(s + "\t" + "\t".join(_fmt(v) for v in table.scores[i]))
    return "\n".join(out) + "\n"


# -- manifests ---------------------------------------------------------------

_MANIFEST_HEADER = ["id", "task_type", "train_size", "metric"]


def parse_manifest(text: str) -> dict[str, TaskMeta]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t") != _MANIFEST_HEADER:
        raise SchemaError(f"manifest header must be {_MANIFEST_HEADER}")
    metas: dict[str, TaskMeta] = {}
    for line_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split("\t")
        if len(parts) != 4:
            raise SchemaError(f"line {line_no}: expected 4 cells")
        task_id, task_type, size, metric = parts
        if task_id in metas:
            raise SchemaError(f"line {line_no}: duplicate id {task_id!r}")
        try:
            ty = TaskType(task_type)
        except ValueError:
            raise SchemaError(f"line {line_no}: unknown task type "
                              f"{task_type!r}") from None
        try:
            n = int(size)
        except ValueError:
            raise SchemaError(f"line {line_no}: bad train size {size!r}") from None
        metas[task_id] = TaskMeta(task_id, ty, n, metric)
    return metas


def serialize_manifest(metas: Mapping[str, TaskMeta] | Iterable[TaskMeta]) -> str:
    items = metas.values() if isinstance(metas, Mapping) else metas
    out = ["\t".join(_MANIFEST_HEADER)]
    for m in sorted(items, key=lambda m: m.id):
        out.append(f"{m.id}\t{m.task_type.value}\t{m.train_size}\t{m.metric_name}")
    return "\n".join(out) + "\n"


# -- embedding sets ----------------------------------------------------------

def parse_embeddings(text: str) -> EmbeddingSet:
    """Parse JSON-lines embedding records {task_id, kind, dim, values}."""
    kind = None
    dim = None
    vectors: dict[str, list[float]] = {}
    for line_no, ln in enumerate(text.splitlines(), start=1):
        if not ln.strip():
            continue
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise SchemaError(f"line {line_no}: invalid JSON ({e.msg})") from None
        for field in ("task_id", "kind", "dim", "values"):
            if field not in rec:
                raise SchemaError(f"line {line_no}: missing field {field!r}")
        try:
            rec_kind = EmbeddingKind(rec["kind"])
        except ValueError:
            raise SchemaError(f"line {line_no}: unknown kind "
                              f"{rec['kind']!r}") from None
        kind = kind or rec_kind
        if rec_kind is not kind:
            raise SchemaError(f"line {line_no}: mixed embedding kinds")
        if dim is None:
            dim = int(rec["dim"])
        if int(rec["dim"]) != dim or len(rec["values"]) != dim:
            raise SchemaError(f"line {line_no}: dim mismatch "
                              f"(expected {dim})")
        if rec["task_id"] in vectors:
            raise SchemaError(f"line {line_no}: duplicate task "
                              f"{rec['task_id']!r}")
        vectors[rec["task_id"]] = rec["values"]
    if not vectors:
        raise SchemaError("embedding file contains no records")
    return EmbeddingSet(kind=kind, dim=dim, vectors=vectors)


def serialize_embeddings(embs: EmbeddingSet) -> str:
    out = []
    for task_id in sorted(embs.vectors):
        out.append(json.dumps({
            "task_id": task_id,
            "kind": embs.kind.value,
            "dim": embs.dim,
            "values": [float(v) for v in embs.vectors[task_id]],
        }))
    return "\n".join(out) + "\n"


# -- embedded datasets -------------------------------------------------------

def parse_embedded_dataset(text: str) -> EmbeddedDataset:
    """Parse a JSON-lines embedded dataset.

    The first line is a header record {label_kind, dim, source_model[,
    n_classes]}; every following line is one example.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise SchemaError("embedded dataset needs a header and examples")
    try:
        header = json.loads(lines[0])
        kind = LabelKind(header["label_kind"])
        dim = int(header["dim"])
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        raise SchemaError(f"line 1: bad header record ({e})") from None
    vectors, labels, groups, choices, correct = [], [], [], [], []
    for line_no, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise SchemaError(f"line {line_no}: invalid JSON ({e.msg})") from None
        vec = rec.get("vector")
        if not isinstance(vec, list) or len(vec) != dim:
            raise SchemaError(f"line {line_no}: vector must have dim {dim}")
        vectors.append(vec)
        if kind is LabelKind.CHOICE_GROUP:
            for field in ("group", "choice", "correct"):
                if field not in rec:
                    raise SchemaError(f"line {line_no}: missing {field!r}")
            groups.append(rec["group"])
            choices.append(int(rec["choice"]))
            correct.append(bool(rec["correct"]))
        else:
            if "label" not in rec:
                raise SchemaError(f"line {line_no}: missing 'label'")
            labels.append(rec["label"])
    kwargs = dict(label_kind=kind, vectors=np.array(vectors, dtype=np.float64),
                  source_model=str(header.get("source_model", "")))
    if kind is LabelKind.CHOICE_GROUP:
        kwargs.update(groups=tuple(groups), choices=np.array(choices),
                      correct=np.array(correct))
    else:
        kwargs.update(labels=np.array(labels))
        if "n_classes" in header:
            kwargs.update(n_classes=int(header["n_classes"]))
    return EmbeddedDataset(**kwargs)


def serialize_embedded_dataset(data: EmbeddedDataset) -> str:
    header: dict = {"label_kind": data.label_kind.value, "dim": data.dim,
                    "source_model": data.source_model}
    if data.label_kind not in (LabelKind.CHOICE_GROUP, LabelKind.REAL_VALUE):
        header["n_classes"] = data.n_classes
    out = [json.dumps(header)]
    for i in range(data.n_examples):
        rec: dict = {"vector": [float(v) for v in data.vectors[i]]}
        if data.label_kind is LabelKind.CHOICE_GROUP:
            rec["group"] = data.groups[i]
            rec["choice"] = int(data.choices[i])
            rec["correct"] = bool(data.correct[i])
        elif data.label_kind is LabelKind.REAL_VALUE:
            rec["label"] = float(data.labels[i])
        else:
            rec["label"] = int(data.labels[i])
        out.append(json.dumps(rec))
    return "\n".join(out) + "\n"


# -- rankings ----------------------------------------------------------------

_RANKING_HEADER = ["target", "method", "rank", "task_id", "score"]


def serialize_rankings(rankings: Sequence[Ranking], fmt: str = "tsv") -> str:
    if fmt == "jsonl":
        out = []
        for r in rankings:
            for pos, (s, score) in enumerate(r.entries, start=1):
                out.append(json.dumps({"target": r.target, "method": r.method,
                                       "rank": pos, "task_id": s,
                                       "score": float(score)}))
        return "\n".join(out) + "\n"
    out = ["\t".join(_RANKING_HEADER)]
    for r in rankings:
        for pos, (s, score) in enumerate(r.entries, start=1):
            out.append(f"{r.target}\t{r.method}\t{pos}\t{s}\t{_fmt(score)}")
    return "\n".join(out) + "\n"


def parse_rankings(text: str) -> list[Ranking]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("empty ranking file")
    records = []
    if lines[0].startswith("{"):
        for line_no, ln in enumerate(lines, start=1):
            try:
                rec = json.loads(ln)
                records.append((rec["target"], rec["method"], int(rec["rank"]),
                                rec["task_id"], float(rec["score"])))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise SchemaError(f"line {line_no}: bad ranking record "
                                  f"({e})") from None
    else:
        if lines[0].split("\t") != _RANKING_HEADER:
            raise SchemaError(f"ranking header must be {_RANKING_HEADER}")
        for line_no, ln in enumerate(lines[1:], start=2):
            parts = ln.split("\t")
            if len(parts) != 5:
                raise SchemaError(f"line {line_no}: expected 5 cells")
            records.append((parts[0], parts[1], int(parts[2]), parts[3],
                            _parse_float(parts[4], line_no, 5)))
    grouped: dict[tuple[str, str], list[tuple[int, str, float]]] = {}
    for target, method, rank, task_id, score in records:
        grouped.setdefault((target, method), []).append((rank, task_id, score))
    rankings = []
    for (target, method), entries in grouped.items():
        entries.sort()
        if [rank for rank, _, _ in entries] != list(range(1, len(entries) + 1)):
            raise SchemaError(f"ranks for ({target!r}, {method!r}) are not "
                              "contiguous from 1")
        rankings.append(Ranking(target=target, method=method,
                                entries=tuple((s, v) for _, s, v in entries)))
    return rankings


# -- score files -------------------------------------------------------------

_SCORES_HEADER = ["target", "task_id", "score"]


def parse_scores(text: str) -> dict[str, dict[str, float]]:
    """Per-target score maps, e.g. few-shot fine-tuning results."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t") != _SCORES_HEADER:
        raise SchemaError(f"score file header must be {_SCORES_HEADER}")
    out: dict[str, dict[str, float]] = {}
    for line_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split("\t")
        if len(parts) != 3:
            raise SchemaError(f"line {line_no}: expected 3 cells")
        target, task_id, score = parts
        per = out.setdefault(target, {})
        if task_id in per:
            raise SchemaError(f"line {line_no}: duplicate score for "
                              f"({target!r}, {task_id!r})")
        per[task_id] = _parse_float(score, line_no, 3)
    return out


def serialize_scores(scores: Mapping[str, Mapping[str, float]]) -> str:
    out = ["\t".join(_SCORES_HEADER)]
    for target in sorted(scores):
        for task_id in sorted(scores[target]):
            out.append(f"{target}\t{task_id}\t{_fmt(scores[target][task_id])}")
    return "\n".join(out) + "\n"


# -- evaluation reports ------------------------------------------------------

_REPORT_HEADER = ["method", "scope", "name", "ndcg", "regret@1", "regret@3",
                  "regret@5"]


def _report_rows(report: AggregatedReport) -> list[tuple[str, str, str, MetricRow]]:
    rows = []
    for (method, target), row in sorted(report.per_target.items()):
        rows.append((method, "target", target, row))
    for (method, ty), row in sorted(report.per_group.items(),
                                    key=lambda kv: (kv[0][0], kv[0][1].value)):
        rows.append((method, "group", ty.value, row))
    for method, row in sorted(report.overall.items()):
        rows.append((method, "overall", "all", row))
    return rows


def serialize_report(report: AggregatedReport, fmt: str = "tsv") -> str:
    rows = _report_rows(report)
    if fmt == "jsonl":
        out = []
        for method, scope, name, row in rows:
            out.append(json.dumps({
                "method": method, "scope": scope, "name": name,
                "ndcg": row.ndcg,
                "regret": {str(k): v for k, v in sorted(row.regret.items())},
            }))
        return "\n".join(out) + "\n"
    out = ["\t".join(_REPORT_HEADER)]
    for method, scope, name, row in rows:
        regs = "\t".join(f"{row.regret[k]:.4f}" for k in (1, 3, 5))
        out.append(f"{method}\t{scope}\t{name}\t{row.ndcg:.4f}\t{regs}")
    return "\n".join(out) + "\n"
