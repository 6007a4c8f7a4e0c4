"""Serialization of itrank input file formats with pinned float precision.

Floats are rounded to 9 significant digits before writing so repeated
runs produce byte-identical files; files are written atomically.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def round9(x: float) -> float:
    return float(f"{float(x):.9g}")


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def embeddings_jsonl(kind: str, vectors: Mapping[str, np.ndarray]) -> str:
    dims = {len(v) for v in vectors.values()}
    assert len(dims) == 1, "embedding vectors must share one dimension"
    dim = dims.pop()
    lines = []
    for task_id in sorted(vectors):
        lines.append(json.dumps({
            "task_id": task_id,
            "kind": kind,
            "dim": dim,
            "values": [round9(v) for v in vectors[task_id]],
        }))
    return "\n".join(lines) + "\n"


def embedded_dataset_jsonl(label_kind: str, vectors: np.ndarray,
                           labels: Sequence, source_model: str,
                           n_classes: int | None = None) -> str:
    header = {"label_kind": label_kind, "dim": int(vectors.shape[1]),
              "source_model": source_model}
    if n_classes is not None:
        header["n_classes"] = int(n_classes)
    lines = [json.dumps(header)]
    for vec, label in zip(vectors, labels):
        rec = {"vector": [round9(v) for v in vec]}
        rec["label"] = round9(label) if label_kind == "real_value" else int(label)
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


def scores_tsv(target: str, scores: Mapping[str, float]) -> str:
    lines = ["target\ttask_id\tscore"]
    for task_id in sorted(scores):
        lines.append(f"{target}\t{task_id}\t{round9(scores[task_id]):.9g}")
    return "\n".join(lines) + "\n"
