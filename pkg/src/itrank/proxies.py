"""Cheap proxy models scored by cross-validation on embedded target data.

Each intermediate model contributes one embedded view of the target
dataset; the proxy's CV score on that view becomes the intermediate's
ranking score.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import spearmanr

from .core import Ranking, TaskType
from .errors import SchemaError, UnsupportedConfigError
from .rankers import rank_by_scores
from .rng import substream


class LabelKind(str, enum.Enum):
    CLASS_INDEX = "class_index"
    REAL_VALUE = "real_value"
    CHOICE_GROUP = "choice_group"
    TOKEN_TAG = "token_tag"


_CLASS_LIKE = (LabelKind.CLASS_INDEX, LabelKind.TOKEN_TAG)


@dataclass(frozen=True)
class EmbeddedDataset:
    """Target examples embedded by one intermediate model.

    For class_index / token_tag / real_value kinds, ``labels`` holds one
    label per vector.  For choice_group, each vector is one answer choice
    and ``groups`` / ``choices`` / ``correct`` identify its question,
    its index within the question, and whether it is the right answer.
    """

    label_kind: LabelKind
    vectors: np.ndarray
    labels: np.ndarray | None = None
    groups: tuple = ()
    choices: np.ndarray | None = None
    correct: np.ndarray | None = None
    source_model: str = ""
    n_classes: int | None = None

    def __post_init__(self):
        kind = LabelKind(self.label_kind)
        object.__setattr__(self, "label_kind", kind)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise SchemaError("vectors must be a non-empty (n, dim) array")
        if not np.all(np.isfinite(vectors)):
            raise SchemaError("vectors contain non-finite entries")
        n = vectors.shape[0]
        if kind is LabelKind.CHOICE_GROUP:
            if len(self.groups) != n or self.choices is None or self.correct is None:
                raise SchemaError("choice_group data needs groups/choices/correct per row")
            choices = np.asarray(self.choices, dtype=np.int64)
            correct = np.asarray(self.correct, dtype=bool)
            if choices.shape != (n,) or correct.shape != (n,):
                raise SchemaError("choices/correct must have one entry per vector")
            if choices.min(initial=0) < 0:
                raise SchemaError("choice indices must be non-negative")
            for g in dict.fromkeys(self.groups):
                mask = np.array([gi == g for gi in self.groups])
                if correct[mask].sum() != 1:
                    raise SchemaError(f"choice group {g!r} must contain exactly one "
                                      "correct choice")
            choices.flags.writeable = False
            correct.flags.writeable = False
            object.__setattr__(self, "groups", tuple(self.groups))
            object.__setattr__(self, "choices", choices)
            object.__setattr__(self, "correct", correct)
            object.__setattr__(self, "labels", None)
        else:
            if self.labels is None:
                raise SchemaError(f"{kind.value} data needs labels")
            if kind is LabelKind.REAL_VALUE:
                labels = np.asarray(self.labels, dtype=np.float64)
                if not np.all(np.isfinite(labels)):
                    raise SchemaError("real_value labels must be finite")
            else:
                labels = np.asarray(self.labels, dtype=np.int64)
                if labels.min(initial=0) < 0:
                    raise SchemaError("class labels must be non-negative")
                declared = self.n_classes
                if declared is None:
                    declared = int(labels.max()) + 1
                    object.__setattr__(self, "n_classes", declared)
                elif labels.size and labels.max() >= declared:
                    raise SchemaError(
                        f"label {int(labels.max())} >= declared class count {declared}")
            if labels.shape != (n,):
                raise SchemaError("labels must have one entry per vector")
            labels.flags.writeable = False
            object.__setattr__(self, "labels", labels)
        vectors = vectors.copy()
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_examples(self) -> int:
        return self.vectors.shape[0]

    def group_order(self) -> tuple:
        """Distinct group ids in first-appearance order."""
        return tuple(dict.fromkeys(self.groups))


@dataclass(frozen=True)
class CvConfig:
    folds: int = 5
    seed: int = 0
    max_iterations: int = 500
    learning_rate: float = 0.1
    l2_penalty: float = 1e-4

    def __post_init__(self):
        if self.folds < 2:
            raise SchemaError("folds must be >= 2")


def fold_assignment(data: EmbeddedDataset, cfg: CvConfig) -> np.ndarray:
    """Fold index per example (per group for choice_group), stratified
    round-robin over a seed-shuffled, label-sorted, index-stable order.
    """
    if data.label_kind is LabelKind.CHOICE_GROUP:
        units = data.group_order()
        if len(units) < cfg.folds:
            raise UnsupportedConfigError(
                f"{len(units)} choice groups < {cfg.folds} folds")
        order = list(range(len(units)))
        substream(cfg.seed, "folds").shuffle(order)
        unit_fold = {units[i]: pos % cfg.folds for pos, i in enumerate(order)}
        return np.array([unit_fold[g] for g in data.groups])
    if data.n_examples < cfg.folds:
        raise UnsupportedConfigError(
            f"{data.n_examples} examples < {cfg.folds} folds")
    folds = np.empty(data.n_examples, dtype=np.int64)
    if data.label_kind is LabelKind.REAL_VALUE:
        strata = {None: np.arange(data.n_examples)}
    else:
        strata = {v: np.flatnonzero(data.labels == v)
                  for v in np.unique(data.labels)}
    for value, idx in sorted(strata.items(), key=lambda kv: repr(kv[0])):
        idx = np.array(idx)
        substream(cfg.seed, "folds", repr(value)).shuffle(idx)
        for pos, i in enumerate(idx):
            folds[i] = pos % cfg.folds
    return folds


def _nn_index(train: np.ndarray, x: np.ndarray) -> tuple[int, float]:
    """Index (into train) and squared distance of the 1-nearest neighbour.

    Ties go to the lowest index.
    """
    diffs = train - x
    d2 = np.einsum("ij,ij->i", diffs, diffs)
    i = int(np.argmin(d2))
    return i, float(d2[i])


def knn_cv_score(data: EmbeddedDataset, cfg: CvConfig) -> float:
    """Mean held-out accuracy of a 1-nearest-neighbour (Euclidean) proxy."""
    if data.label_kind is LabelKind.REAL_VALUE:
        raise UnsupportedConfigError("kNN proxy does not support regression labels")
    folds = fold_assignment(data, cfg)
    accs = []
    for f in range(cfg.folds):
        test_mask = folds == f
        train_mask = ~test_mask
        if data.label_kind in _CLASS_LIKE:
            train_x = data.vectors[train_mask]
            train_y = data.labels[train_mask]
            correct = 0
            test_idx = np.flatnonzero(test_mask)
            for i in test_idx:
                j, _ = _nn_index(train_x, data.vectors[i])
                correct += int(train_y[j] == data.labels[i])
            accs.append(correct / len(test_idx))
        else:
            accs.append(_knn_choice_fold_accuracy(data, train_mask, test_mask))
    return float(np.mean(accs))


def _knn_choice_fold_accuracy(data: EmbeddedDataset, train_mask, test_mask) -> float:
    """Per-group accuracy: pick the choice whose nearest neighbour looks most
    correct (correct neighbours score +1/(1+d), incorrect -1/(1+d))."""
    train_x = data.vectors[train_mask]
    train_correct = data.correct[train_mask]
    test_groups = [g for g, m in zip(data.groups, test_mask) if m]
    hits = 0
    groups = list(dict.fromkeys(test_groups))
    for g in groups:
        rows = [i for i, gi in enumerate(data.groups) if gi == g and test_mask[i]]
        best_row, best_score = None, -np.inf
        for i in rows:
            j, d2 = _nn_index(train_x, data.vectors[i])
            sign = 1.0 if train_correct[j] else -1.0
            score = sign / (1.0 + np.sqrt(d2))
            if score > best_score:
                best_row, best_score = i, score
        hits += int(data.correct[best_row])
    return hits / len(groups)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit_logistic(x: np.ndarray, y: np.ndarray, n_classes: int,
                 cfg: CvConfig) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial logistic regression by full-batch gradient descent.

    Returns (weights, bias) with weights of shape (n_classes, dim).
    Deterministic: zero initialization, fixed iteration count.
    """
    n, dim = x.shape
    w = np.zeros((n_classes, dim))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(cfg.max_iterations):
        p = _softmax(x @ w.T + b)
        err = p - onehot
        grad_w = err.T @ x / n + cfg.l2_penalty * w
        grad_b = err.mean(axis=0)
        w -= cfg.learning_rate * grad_w
        b -= cfg.learning_rate * grad_b
    return w, b


def _fit_ridge(x: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    """Ridge regression coefficients with an unpenalized intercept column."""
    xa = np.hstack([x, np.ones((x.shape[0], 1))])
    penalty = l2 * np.eye(xa.shape[1])
    penalty[-1, -1] = 0.0
    return np.linalg.solve(xa.T @ xa + penalty, xa.T @ y)


def linear_cv_score(data: EmbeddedDataset, cfg: CvConfig) -> float:
    """Mean held-out score of a logistic / linear regression proxy.

    Classification and tagging use accuracy; real-valued targets use
    Spearman correlation of ridge predictions; choice groups use binary
    correct-vs-incorrect logistic regression with per-group argmax.
    A training fold containing a single class still yields a (trivial)
    constant predictor but is flagged with a warning.
    """
    folds = fold_assignment(data, cfg)
    scores = []
    for f in range(cfg.folds):
        test_mask = folds == f
        train_mask = ~test_mask
        if data.label_kind in _CLASS_LIKE:
            train_y = data.labels[train_mask]
            if len(np.unique(train_y)) < 2:
                warnings.warn(f"fold {f}: single-class training fold", stacklevel=2)
            w, b = fit_logistic(data.vectors[train_mask], train_y,
                                data.n_classes, cfg)
            pred = np.argmax(data.vectors[test_mask] @ w.T + b, axis=1)
            scores.append(float(np.mean(pred == data.labels[test_mask])))
        elif data.label_kind is LabelKind.REAL_VALUE:
            beta = _fit_ridge(data.vectors[train_mask], data.labels[train_mask],
                              cfg.l2_penalty)
            test_x = np.hstack([data.vectors[test_mask],
                                np.ones((int(test_mask.sum()), 1))])
            rho = spearmanr(test_x @ beta, data.labels[test_mask]).statistic
            scores.append(0.0 if np.isnan(rho) else float(rho))
        else:
            scores.append(_linear_choice_fold_accuracy(data, train_mask, test_mask,
                                                       cfg, f))
    return float(np.mean(scores))


def _linear_choice_fold_accuracy(data: EmbeddedDataset, train_mask, test_mask,
                                 cfg: CvConfig, f: int) -> float:
    train_y = data.correct[train_mask].astype(np.int64)
    if len(np.unique(train_y)) < 2:
        warnings.warn(f"fold {f}: single-class training fold", stacklevel=3)
    w, b = fit_logistic(data.vectors[train_mask], train_y, 2, cfg)
    logits = data.vectors @ w.T + b
    p_correct = _softmax(logits)[:, 1]
    hits = 0
    groups = [g for g, m in zip(data.groups, test_mask) if m]
    groups = list(dict.fromkeys(groups))
    for g in groups:
        rows = [i for i, gi in enumerate(data.groups) if gi == g and test_mask[i]]
        best = max(rows, key=lambda i: (p_correct[i], -i))
        hits += int(data.correct[best])
    return hits / len(groups)


def sample_tokens(data: EmbeddedDataset, n: int, seed: int) -> EmbeddedDataset:
    """Uniform without-replacement subsample of token-level examples.

    Keeps original index order; returns the dataset unchanged when it
    already has at most n examples.
    """
    if data.label_kind is not LabelKind.TOKEN_TAG:
        raise UnsupportedConfigError("token sampling applies to token_tag data only")
    if n >= data.n_examples:
        return data
    idx = substream(seed, "sample_tokens").choice(data.n_examples, size=n,
                                                  replace=False)
    idx = np.sort(idx)
    return EmbeddedDataset(
        label_kind=data.label_kind,
        vectors=data.vectors[idx],
        labels=data.labels[idx],
        source_model=data.source_model,
        n_classes=data.n_classes,
    )


def proxy_rank(datasets: Mapping[str, EmbeddedDataset], cfg: CvConfig,
               proxy: str, target: str,
               target_type: TaskType | None = None) -> Ranking:
    """Rank intermediates by their proxy-model CV score on the target data."""
    if target_type is not None and TaskType(target_type) is TaskType.EXTRACTIVE_QA:
        raise UnsupportedConfigError(
            "proxy models are not defined for extractive QA targets")
    if proxy not in ("knn", "linear"):
        raise UnsupportedConfigError(f"unknown proxy {proxy!r}")
    score_fn = knn_cv_score if proxy == "knn" else linear_cv_score
    scores = {s: score_fn(d, cfg) for s, d in datasets.items()}
    return rank_by_scores(scores, target, method=proxy)
