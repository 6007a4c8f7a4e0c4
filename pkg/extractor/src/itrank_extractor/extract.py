"""Extraction jobs: task embeddings, dataset embeddings and few-shot scores.

Every operation is deterministic for a fixed (model, data, seed) and
writes files that the itrank parsers accept unchanged.  All analysis
(ranking, metrics) stays out of this package; it only produces inputs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .encode import Encoder, read_text_dataset
from .writers import (atomic_write, embedded_dataset_jsonl, embeddings_jsonl,
                      scores_tsv)


class OutputKind(str, enum.Enum):
    TEXT_MEAN = "text_mean"
    SENTENCE = "sentence"
    TASK_FIM = "task_fim"
    EMBEDDED_DATASET = "embedded_dataset"
    FSFT_SCORES = "fsft_scores"


class FimScope(str, enum.Enum):
    HEAD = "head"            # classifier head parameters (per-task trainables)
    LAST_LAYER = "last_layer"  # final encoder layer (uniform across tasks)


@dataclass
class ExtractorJob:
    """One extraction run.

    ``data_paths`` hold JSON-lines text datasets; for multi-task kinds
    each file stem becomes the task id.  ``checkpoints`` (fsft_scores
    only) is a directory of per-intermediate classifier-head files.
    """

    model_id: str
    data_paths: list[str]
    kind: OutputKind
    out_path: str
    max_examples: int | None = None
    seq_len: int = 128
    seed: int = 0
    batch_size: int = 16
    # kind-specific knobs
    task_id: str | None = None          # overrides the file stem (single file)
    label_kind: str = "class_index"     # embedded_dataset
    n_classes: int | None = None
    fim_scope: FimScope = FimScope.HEAD
    head_epochs: int = 30
    head_lr: float = 0.1
    checkpoints: str | None = None      # fsft_scores
    target: str = "target"              # fsft_scores: target id in the output
    steps: list[int] = field(default_factory=lambda: [50])

    def __post_init__(self):
        self.kind = OutputKind(self.kind)
        self.fim_scope = FimScope(self.fim_scope)
        if not self.data_paths:
            raise ValueError("at least one dataset path is required")
        if self.seq_len < 1:
            raise ValueError("sequence length cap must be positive")
        if self.kind is OutputKind.FSFT_SCORES and not self.checkpoints:
            raise ValueError("fsft_scores needs --checkpoints")
        if self.task_id and len(self.data_paths) > 1:
            raise ValueError("--task-id only applies to a single dataset")

    def task_name(self, path: str) -> str:
        return self.task_id or Path(path).stem


def _encoder(job: ExtractorJob) -> Encoder:
    return Encoder(job.model_id, seq_len=job.seq_len, batch_size=job.batch_size)


def extract_text_mean(job: ExtractorJob) -> str:
    """One token-weighted mean vector per task dataset."""
    enc = _encoder(job)
    vectors = {}
    for path in job.data_paths:
        texts, _ = read_text_dataset(path, job.max_examples)
        vectors[job.task_name(path)] = enc.mean_over_tokens(texts)
    text = embeddings_jsonl(OutputKind.TEXT_MEAN.value, vectors)
    atomic_write(job.out_path, text)
    return job.out_path


def extract_sentence(job: ExtractorJob) -> str:
    """One example-weighted mean of per-example sentence vectors per task."""
    enc = _encoder(job)
    vectors = {}
    for path in job.data_paths:
        texts, _ = read_text_dataset(path, job.max_examples)
        vectors[job.task_name(path)] = enc.example_vectors(texts).mean(axis=0)
    atomic_write(job.out_path, embeddings_jsonl(OutputKind.SENTENCE.value,
                                                vectors))
    return job.out_path


def _int_labels(labels, n_classes: int | None) -> tuple[np.ndarray, int]:
    arr = np.asarray([int(v) for v in labels], dtype=np.int64)
    if arr.min() < 0:
        raise ValueError("class labels must be non-negative")
    declared = n_classes or int(arr.max()) + 1
    if arr.max() >= declared:
        raise ValueError(f"label {arr.max()} exceeds class count {declared}")
    return arr, declared


def extract_embedded_dataset(job: ExtractorJob) -> str:
    """The target dataset as seen through one intermediate model."""
    if len(job.data_paths) != 1:
        raise ValueError("embedded_dataset expects exactly one dataset")
    enc = _encoder(job)
    texts, labels = read_text_dataset(job.data_paths[0], job.max_examples,
                                      need_labels=True)
    vectors = enc.example_vectors(texts)
    if job.label_kind == "real_value":
        out_labels = [float(v) for v in labels]
        n_classes = None
    else:
        out_labels, n_classes = _int_labels(labels, job.n_classes)
    text = embedded_dataset_jsonl(job.label_kind, vectors, out_labels,
                                  source_model=job.task_name(job.data_paths[0]),
                                  n_classes=n_classes)
    atomic_write(job.out_path, text)
    return job.out_path


class _Head(torch.nn.Module):
    def __init__(self, dim: int, n_classes: int, seed: int):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.linear = torch.nn.Linear(dim, n_classes)
        with torch.no_grad():
            self.linear.weight.copy_(0.01 * torch.randn(
                (n_classes, dim), generator=gen))
            self.linear.bias.zero_()

    def forward(self, x):
        return self.linear(x)


def train_head(features: np.ndarray, labels: np.ndarray, n_classes: int,
               seed: int, epochs: int = 30, lr: float = 0.1) -> _Head:
    """Full-batch gradient descent on frozen features; deterministic."""
    head = _Head(features.shape[1], n_classes, seed)
    x = torch.tensor(features, dtype=torch.float32)
    y = torch.tensor(labels, dtype=torch.long)
    opt = torch.optim.SGD(head.parameters(), lr=lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    for _ in range(epochs):
        opt.zero_grad()
        loss_fn(head(x), y).backward()
        opt.step()
    return head


def save_head(head: _Head, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save({"weight": head.linear.weight.detach().clone(),
                "bias": head.linear.bias.detach().clone()}, path)


def load_head(path: str | Path) -> _Head:
    state = torch.load(path, weights_only=True)
    n_classes, dim = state["weight"].shape
    head = _Head(dim, n_classes, seed=0)
    with torch.no_grad():
        head.linear.weight.copy_(state["weight"])
        head.linear.bias.copy_(state["bias"])
    return head


def _fim_params(head: _Head, encoder: Encoder, scope: FimScope):
    """Parameters entering the task embedding, in a fixed documented order:
    head scope = [linear.weight (row-major), linear.bias];
    last_layer scope = the final encoder layer's named_parameters() order."""
    if scope is FimScope.HEAD:
        return [head.linear.weight, head.linear.bias]
    layers = encoder.model.encoder.layer
    return [p for _, p in sorted(layers[-1].named_parameters())]


def _fim_diagonal(head: _Head, encoder: Encoder, texts: list[str],
                  labels: np.ndarray, scope: FimScope) -> np.ndarray:
    """Mean squared gradient of log p(y|x), one example at a time."""
    params = _fim_params(head, encoder, scope)
    for p in params:
        p.requires_grad_(True)
    total = None
    log_softmax = torch.nn.LogSoftmax(dim=-1)
    for text, y in zip(texts, labels):
        enc = encoder.tokenizer([text], truncation=True,
                                max_length=encoder.seq_len,
                                return_special_tokens_mask=True,
                                return_tensors="pt")
        special = enc.pop("special_tokens_mask")
        out = encoder.model(**enc)
        mask = enc["attention_mask"].bool() & ~special.bool()
        denom = mask.sum().clamp(min=1)
        pooled = (out.last_hidden_state * mask.unsqueeze(-1)).sum(dim=1) / denom
        loglik = log_softmax(head(pooled))[0, int(y)]
        grads = torch.autograd.grad(loglik, params, allow_unused=False)
        flat = torch.cat([g.reshape(-1) for g in grads]).to(torch.float64)
        sq = (flat * flat).numpy()
        total = sq if total is None else total + sq
    return total / len(texts)


def extract_task_fim(job: ExtractorJob) -> str:
    """Fisher-diagonal task embedding per dataset.

    A classifier head is fitted to each task's pooled features first;
    the embedding is the per-parameter mean squared log-likelihood
    gradient over the task's examples with their observed labels.
    """
    enc = _encoder(job)
    vectors = {}
    class_counts = set()
    for path in job.data_paths:
        texts, raw_labels = read_text_dataset(path, job.max_examples,
                                              need_labels=True)
        labels, n_classes = _int_labels(raw_labels, job.n_classes)
        class_counts.add(n_classes)
        if job.fim_scope is FimScope.HEAD and len(class_counts) > 1:
            raise ValueError(
                "head-scope embeddings need a shared class count across "
                "tasks; use --fim-scope last_layer for mixed label spaces")
        features = enc.example_vectors(texts)
        head = train_head(features, labels, n_classes, seed=job.seed,
                          epochs=job.head_epochs, lr=job.head_lr)
        vectors[job.task_name(path)] = _fim_diagonal(head, enc, texts, labels,
                                                     job.fim_scope)
    atomic_write(job.out_path, embeddings_jsonl(OutputKind.TASK_FIM.value,
                                                vectors))
    return job.out_path


def _few_shot_eval(head: _Head, features: torch.Tensor, labels: torch.Tensor,
                   train_idx, val_idx, steps: int, seed: int,
                   lr: float, batch_size: int) -> float:
    tuned = _Head(head.linear.in_features, head.linear.out_features, seed=0)
    with torch.no_grad():
        tuned.linear.weight.copy_(head.linear.weight)
        tuned.linear.bias.copy_(head.linear.bias)
    opt = torch.optim.SGD(tuned.parameters(), lr=lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    rng = np.random.default_rng(seed)
    order = []
    for _ in range(steps):
        if not order:
            order = list(rng.permutation(len(train_idx)))
        batch = [train_idx[i] for i in order[:batch_size]]
        order = order[batch_size:]
        opt.zero_grad()
        loss_fn(tuned(features[batch]), labels[batch]).backward()
        opt.step()
    with torch.no_grad():
        pred = tuned(features[val_idx]).argmax(dim=-1)
    return float((pred == labels[val_idx]).double().mean()) * 100.0


def extract_fsft_scores(job: ExtractorJob) -> list[str]:
    """Validation score of every checkpoint after N tuning steps.

    Emits one score file per requested step count; multi-step sweeps
    append a ``_steps<N>`` suffix to the output stem.
    """
    if len(job.data_paths) != 1:
        raise ValueError("fsft_scores expects exactly one target dataset")
    ck_dir = Path(job.checkpoints)
    ck_files = sorted(ck_dir.glob("*.pt"))
    if not ck_files:
        raise ValueError(f"no checkpoints (*.pt) found in {ck_dir}")
    enc = _encoder(job)
    texts, raw_labels = read_text_dataset(job.data_paths[0], job.max_examples,
                                          need_labels=True)
    labels, _ = _int_labels(raw_labels, job.n_classes)
    features = torch.tensor(enc.example_vectors(texts), dtype=torch.float32)
    y = torch.tensor(labels, dtype=torch.long)
    order = np.random.default_rng(job.seed).permutation(len(texts))
    split = max(1, int(0.8 * len(texts)))
    train_idx, val_idx = list(order[:split]), list(order[split:]) or list(order)

    written = []
    for n_steps in job.steps:
        scores = {}
        for ck in ck_files:
            head = load_head(ck)
            scores[ck.stem] = _few_shot_eval(
                head, features, y, train_idx, val_idx, n_steps,
                seed=job.seed, lr=job.head_lr, batch_size=job.batch_size)
        out = Path(job.out_path)
        if len(job.steps) > 1:
            out = out.with_name(f"{out.stem}_steps{n_steps}{out.suffix}")
        atomic_write(out, scores_tsv(job.target, scores))
        written.append(str(out))
    return written


_DISPATCH = {
    OutputKind.TEXT_MEAN: extract_text_mean,
    OutputKind.SENTENCE: extract_sentence,
    OutputKind.EMBEDDED_DATASET: extract_embedded_dataset,
    OutputKind.TASK_FIM: extract_task_fim,
    OutputKind.FSFT_SCORES: extract_fsft_scores,
}


def run_job(job: ExtractorJob):
    torch.manual_seed(job.seed)
    torch.set_num_threads(1)
    return _DISPATCH[job.kind](job)
