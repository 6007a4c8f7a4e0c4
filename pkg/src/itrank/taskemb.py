"""Fisher-information task embeddings for softmax-regression probes.

The embedding of a task is the diagonal of the empirical Fisher
information matrix of a probe fitted to it: the per-parameter mean of
squared log-likelihood gradients over the task's examples.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import EmbeddingKind, EmbeddingSet, Ranking
from .errors import DomainError, SchemaError, StructureError
from .proxies import EmbeddedDataset, LabelKind, _softmax
from .rankers import cosine, rank_by_cosine, rank_by_scores


@dataclass(frozen=True)
class ProbeModel:
    """Softmax-regression probe; parameters flatten as row-major weights
    followed by the bias vector."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise SchemaError("weights must be (classes, dim) with matching bias")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise SchemaError("probe parameters must be finite")
        w = w.copy(); b = b.copy()
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    @classmethod
    def from_flat(cls, flat: np.ndarray, n_classes: int, dim: int) -> "ProbeModel":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (n_classes * dim + n_classes,):
            raise SchemaError("flat parameter vector has the wrong length")
        return cls(weights=flat[: n_classes * dim].reshape(n_classes, dim),
                   bias=flat[n_classes * dim:])

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return _softmax(x @ self.weights.T + self.bias)


def loglik_grad(model: ProbeModel, x: np.ndarray, y: int) -> np.ndarray:
    """Gradient of log p(y | x) w.r.t. the flattened probe parameters.

    For class c the weight-row gradient is (1{c=y} - p_c) * x and the
    bias gradient is (1{c=y} - p_c).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DomainError(f"input has shape {x.shape}, expected ({model.dim},)")
    if not 0 <= y < model.n_classes:
        raise DomainError(f"label {y} out of range for {model.n_classes} classes")
    p = model.predict_proba(x)[0]
    residual = -p
    residual[y] += 1.0
    return np.concatenate([np.outer(residual, x).ravel(), residual])


def fim_diagonal(model: ProbeModel, data: EmbeddedDataset,
                 label_expectation: bool = False) -> np.ndarray:
    """Per-parameter mean of squared log-likelihood gradients.

    With default settings the observed labels are used (the empirical
    Fisher).  ``label_expectation=True`` instead takes, per example, the
    exact expectation over labels drawn from the model's own predictive
    distribution.
    """
    if data.label_kind not in (LabelKind.CLASS_INDEX, LabelKind.TOKEN_TAG):
        raise DomainError("task embeddings need classification-style labels")
    if data.n_examples == 0:
        raise DomainError("cannot embed an empty dataset")
    if data.labels.max(initial=0) >= model.n_classes:
        raise DomainError("dataset labels exceed the probe's class count")
    x = data.vectors
    if x.shape[1] != model.dim:
        raise DomainError(f"data dim {x.shape[1]} != probe dim {model.dim}")
    p = model.predict_proba(x)                            # (n, C)
    n, c = p.shape
    if label_expectation:
        # E_y[grad^2] with residual r_c(y) = 1{c=y} - p_c:
        # E[r_c^2] = p_c (1 - p_c)^2 + (1 - p_c) p_c^2 = p_c (1 - p_c)
        r2 = p * (1.0 - p)                                # (n, C)
    else:
        onehot = np.zeros_like(p)
        onehot[np.arange(n), data.labels] = 1.0
        r2 = (onehot - p) ** 2
    w_diag = (r2[:, :, None] * (x ** 2)[:, None, :]).mean(axis=0)  # (C, dim)
    b_diag = r2.mean(axis=0)
    return np.concatenate([w_diag.ravel(), b_diag])


def task_embedding_set(embeddings: Mapping[str, np.ndarray]) -> EmbeddingSet:
    """Wrap per-task FIM diagonals as a ranking-ready embedding set."""
    dims = {v.shape[0] for v in embeddings.values()}
    if len(dims) != 1:
        raise StructureError(f"task embeddings differ in length: {sorted(dims)}")
    return EmbeddingSet(kind=EmbeddingKind.TASK_FIM, dim=dims.pop(),
                        vectors=dict(embeddings))


def taskemb_rank(embs: EmbeddingSet, intermediates: Sequence[str],
                 target: str) -> Ranking:
    """Cosine ranking over Fisher-diagonal task embeddings."""
    if embs.kind is not EmbeddingKind.TASK_FIM:
        raise StructureError(f"expected task_fim embeddings, got {embs.kind.value}")
    return rank_by_cosine(embs, intermediates, target, method="taskemb")


def fs_taskemb_rank(before_after: Mapping[str, tuple[np.ndarray, np.ndarray]],
                    target: str) -> Ranking:
    """Rank by self-similarity of each model's task embedding before vs
    after a few fine-tuning steps on the target; stable models rank first."""
    scores = {}
    for s, (before, after) in before_after.items():
        before = np.asarray(before, dtype=np.float64)
        after = np.asarray(after, dtype=np.float64)
        if before.shape != after.shape:
            raise StructureError(f"embedding length mismatch for {s!r}")
        if not np.linalg.norm(before) or not np.linalg.norm(after):
            raise DomainError(f"zero-norm task embedding for {s!r}")
        scores[s] = cosine(before, after)
    return rank_by_scores(scores, target, method="fs_taskemb")
