"""A self-contained synthetic transfer-learning universe.

Tasks are Gaussian-mixture classification problems over a shared feature
space.  Relatedness is planted: with zero domain drift, intermediate i is
an exact copy of target i's distribution, so the ground-truth best
intermediate for each target is known by construction.  Probes are
softmax-regression models trained by minibatch gradient descent with
early stopping, fine-tuned sequentially to fill a transfer table, and
every selection method can be run end-to-end against that table.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .core import (EmbeddingKind, EmbeddingSet, Ranking, TaskMeta, TaskType,
                   TransferTable)
from .errors import DomainError, SchemaError, UnsupportedConfigError
from .metrics import AggregatedReport, aggregate, metric_row
from .proxies import EmbeddedDataset, LabelKind, _softmax
from .rankers import (MethodKind, MethodSpec, rank_by_cosine, rank_by_scores,
                      rank_by_size, rank_random, rrf_fuse, type_prerank)
from .rng import derive_seed, substream
from .taskemb import ProbeModel, fim_diagonal, fs_taskemb_rank, task_embedding_set
from .toy_types import LabeledData, ToyTask, ToyUniverse  # noqa: F401  (re-export)
from .toy_types import ToyTrainConfig, ToyUniverseConfig

_VAL_N = 1000
_TEST_N = 2000


def _sample_task(centers: np.ndarray, n: int, rng: np.random.Generator) -> LabeledData:
    classes = centers.shape[0]
    y = np.arange(n) % classes
    rng.shuffle(y)
    x = centers[y] + rng.normal(size=(n, centers.shape[1]))
    return LabeledData(x=x, y=y)


def gen_universe(cfg: ToyUniverseConfig) -> ToyUniverse:
    """Generate tasks, their datasets and metadata, deterministically.

    Targets get fresh cluster centers; intermediate i < n_targets reuses
    target i's centers shifted by ``domain_drift`` along a random unit
    direction per class, and the remaining intermediates are unrelated.
    """
    target_centers = []
    for j in range(cfg.n_targets):
        rng = substream(cfg.seed, "centers", "target", j)
        dirs = rng.normal(size=(cfg.n_classes, cfg.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        target_centers.append(cfg.cluster_separation * dirs)

    tasks: dict[str, ToyTask] = {}
    for j in range(cfg.n_targets):
        name = f"target{j:02d}"
        rng = substream(cfg.seed, "data", name)
        tasks[name] = ToyTask(
            meta=TaskMeta(name, TaskType.CLASSIFICATION, cfg.target_train_cap, "acc"),
            train=_sample_task(target_centers[j], cfg.target_train_cap, rng),
            val=_sample_task(target_centers[j], _VAL_N, rng),
            test=_sample_task(target_centers[j], _TEST_N, rng),
        )
    for i in range(cfg.n_intermediates):
        name = f"inter{i:02d}"
        rng = substream(cfg.seed, "data", name)
        if i < cfg.n_targets:
            drift_dirs = substream(cfg.seed, "drift", i).normal(
                size=(cfg.n_classes, cfg.dim))
            drift_dirs /= np.linalg.norm(drift_dirs, axis=1, keepdims=True)
            centers = target_centers[i] + cfg.domain_drift * drift_dirs
        else:
            cdirs = substream(cfg.seed, "centers", "inter", i).normal(
                size=(cfg.n_classes, cfg.dim))
            cdirs /= np.linalg.norm(cdirs, axis=1, keepdims=True)
            centers = cfg.cluster_separation * cdirs
        tasks[name] = ToyTask(
            meta=TaskMeta(name, TaskType.CLASSIFICATION,
                          cfg.examples_per_intermediate, "acc"),
            train=_sample_task(centers, cfg.examples_per_intermediate, rng),
            val=_sample_task(centers, _VAL_N, rng),
            test=_sample_task(centers, _TEST_N, rng),
        )
    return ToyUniverse(
        cfg=cfg,
        tasks=tasks,
        intermediates=tuple(f"inter{i:02d}" for i in range(cfg.n_intermediates)),
        targets=tuple(f"target{j:02d}" for j in range(cfg.n_targets)),
    )


def _gd_steps(w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray,
              order: np.ndarray, batch: int, lr: float) -> None:
    onehot = np.eye(w.shape[0])[y]
    for start in range(0, len(order), batch):
        idx = order[start:start + batch]
        p = _softmax(x[idx] @ w.T + b)
        err = p - onehot[idx]
        w -= lr * (err.T @ x[idx]) / len(idx)
        b -= lr * err.mean(axis=0)


def evaluate_probe(model: ProbeModel, data: LabeledData) -> float:
    pred = np.argmax(data.x @ model.weights.T + model.bias, axis=1)
    return float(np.mean(pred == data.y))


def train_probe(train: LabeledData, val: LabeledData, cfg: ToyTrainConfig,
                seed: int, init: ProbeModel | None = None,
                n_classes: int | None = None) -> ProbeModel:
    """Minibatch-GD softmax probe with early stopping on validation accuracy.

    Returns the parameters of the best validation epoch (the initial
    parameters count as epoch zero).  When ``init`` is given, training
    continues from its parameters; a fresh head is drawn if its class
    count does not match.  The shuffling stream is independent of the
    initialization stream, so runs with the same seed differ only
    through ``init``.
    """
    classes_present = np.unique(train.y)
    if len(classes_present) < 2:
        raise DomainError("training data must contain at least two classes")
    c = n_classes or int(max(train.y.max(), val.y.max())) + 1
    dim = train.x.shape[1]
    if init is not None and init.n_classes == c and init.dim == dim:
        w = init.weights.copy()
        b = init.bias.copy()
    else:
        init_rng = substream(seed, "init")
        w = 0.01 * init_rng.normal(size=(c, dim))
        b = np.zeros(c)
    shuffle_rng = substream(seed, "shuffle")

    best = (evaluate_probe(ProbeModel(w, b), val), 0, w.copy(), b.copy())
    since_best = 0
    for epoch in range(1, cfg.epochs_max + 1):
        order = shuffle_rng.permutation(len(train.y))
        _gd_steps(w, b, train.x, train.y, order, cfg.batch_size,
                  cfg.learning_rate)
        acc = evaluate_probe(ProbeModel(w, b), val)
        if acc > best[0]:
            best = (acc, epoch, w.copy(), b.copy())
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break
    return ProbeModel(weights=best[2], bias=best[3])


def few_shot_tune(model: ProbeModel, train: LabeledData, cfg: ToyTrainConfig,
                  steps: int, seed: int) -> ProbeModel:
    """Run a fixed number of minibatch GD steps from the given parameters."""
    w = model.weights.copy()
    b = model.bias.copy()
    rng = substream(seed, "shuffle")
    done = 0
    while done < steps:
        order = rng.permutation(len(train.y))
        n_batches = int(np.ceil(len(order) / cfg.batch_size))
        take = min(steps - done, n_batches)
        _gd_steps(w, b, train.x, train.y, order[: take * cfg.batch_size],
                  cfg.batch_size, cfg.learning_rate)
        done += take
    return ProbeModel(weights=w, bias=b)


def _capped(data: LabeledData, cap: int | None) -> LabeledData:
    if cap is None or cap >= len(data.y):
        return data
    return LabeledData(x=data.x[:cap], y=data.y[:cap])


def sequential_transfer(model: ProbeModel | None, task: ToyTask,
                        cfg: ToyTrainConfig, seed: int = 0,
                        cap: int | None = None) -> float:
    """Mean held-out score (0..100) of fine-tuning ``model`` on the task.

    ``model=None`` gives the no-transfer baseline: same data and shuffle
    streams per restart, fresh initialization.
    """
    train = _capped(task.train, cap)
    scores = []
    for r in range(cfg.restarts):
        probe = train_probe(train, task.val, cfg,
                            seed=derive_seed(seed, "restart", r), init=model)
        scores.append(100.0 * evaluate_probe(probe, task.test))
    return float(np.mean(scores))


def train_intermediate_probes(universe: ToyUniverse,
                              cfg: ToyTrainConfig) -> dict[str, ProbeModel]:
    return {
        s: train_probe(universe.tasks[s].train, universe.tasks[s].val, cfg,
                       seed=derive_seed(universe.cfg.seed, "inter-probe", s))
        for s in universe.intermediates
    }


def build_transfer_table(universe: ToyUniverse, cfg: ToyTrainConfig,
                         probes: Mapping[str, ProbeModel] | None = None
                         ) -> TransferTable:
    """Fill the complete grid of sequential-transfer scores plus baselines."""
    base_seed = universe.cfg.seed
    probes = probes or train_intermediate_probes(universe, cfg)
    baseline = {}
    scores = np.zeros((len(universe.intermediates), len(universe.targets)))
    for j, t in enumerate(universe.targets):
        task = universe.tasks[t]
        run_seed = derive_seed(base_seed, "target-run", t)
        baseline[t] = sequential_transfer(None, task, cfg, seed=run_seed)
        for i, s in enumerate(universe.intermediates):
            scores[i, j] = sequential_transfer(probes[s], task, cfg,
                                               seed=run_seed)
    return TransferTable(
        model_tag=f"toylab-seed{base_seed}",
        intermediates=universe.intermediates,
        targets=universe.targets,
        baseline=baseline,
        scores=scores,
    )


def _as_embedded(data: LabeledData, n_classes: int, source: str) -> EmbeddedDataset:
    return EmbeddedDataset(label_kind=LabelKind.CLASS_INDEX, vectors=data.x,
                           labels=data.y, source_model=source,
                           n_classes=n_classes)


class _LabArtifacts:
    """Lazily computed shared inputs for the selection methods."""

    def __init__(self, universe: ToyUniverse, cfg: ToyTrainConfig,
                 target_example_cap: int | None, few_shot_steps: int):
        self.universe = universe
        self.cfg = cfg
        self.cap = target_example_cap
        self.steps = few_shot_steps
        self._probes: dict[str, ProbeModel] | None = None
        self._text_emb: EmbeddingSet | None = None
        self._task_emb: EmbeddingSet | None = None
        self._fsft: dict[str, dict[str, float]] = {}
        self._fs_pairs: dict[str, dict[str, tuple[np.ndarray, np.ndarray]]] = {}

    def visible_train(self, t: str) -> LabeledData:
        return _capped(self.universe.tasks[t].train, self.cap)

    @property
    def probes(self) -> dict[str, ProbeModel]:
        if self._probes is None:
            self._probes = train_intermediate_probes(self.universe, self.cfg)
        return self._probes

    @property
    def text_embeddings(self) -> EmbeddingSet:
        if self._text_emb is None:
            vecs = {}
            for s in self.universe.intermediates:
                vecs[s] = self.universe.tasks[s].train.x.mean(axis=0)
            for t in self.universe.targets:
                vecs[t] = self.visible_train(t).x.mean(axis=0)
            self._text_emb = EmbeddingSet(kind=EmbeddingKind.TEXT_MEAN,
                                          dim=self.universe.cfg.dim, vectors=vecs)
        return self._text_emb

    @property
    def task_embeddings(self) -> EmbeddingSet:
        if self._task_emb is None:
            nc = self.universe.cfg.n_classes
            embs = {}
            for s in self.universe.intermediates:
                task = self.universe.tasks[s]
                embs[s] = fim_diagonal(self.probes[s],
                                       _as_embedded(task.train, nc, s))
            for t in self.universe.targets:
                train = self.visible_train(t)
                probe = train_probe(train, self.universe.tasks[t].val, self.cfg,
                                    seed=derive_seed(self.universe.cfg.seed,
                                                     "target-probe", t))
                embs[t] = fim_diagonal(probe, _as_embedded(train, nc, t))
            self._task_emb = task_embedding_set(embs)
        return self._task_emb

    def _run_few_shot(self, t: str) -> None:
        nc = self.universe.cfg.n_classes
        train = self.visible_train(t)
        val = self.universe.tasks[t].val
        target_data = _as_embedded(train, nc, t)
        scores: dict[str, float] = {}
        pairs: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for s in self.universe.intermediates:
            before = fim_diagonal(self.probes[s], target_data)
            accs = []
            for r in range(self.cfg.restarts):
                tuned = few_shot_tune(
                    self.probes[s], train, self.cfg, self.steps,
                    seed=derive_seed(self.universe.cfg.seed, "fsft", s, t,
                                     self.steps, r))
                accs.append(100.0 * evaluate_probe(tuned, val))
                if r == 0:
                    pairs[s] = (before, fim_diagonal(tuned, target_data))
            scores[s] = float(np.mean(accs))
        self._fsft[t] = scores
        self._fs_pairs[t] = pairs

    def fsft_scores(self, t: str) -> dict[str, float]:
        if t not in self._fsft:
            self._run_few_shot(t)
        return self._fsft[t]

    def fs_taskemb_pairs(self, t: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        if t not in self._fs_pairs:
            self._run_few_shot(t)
        return self._fs_pairs[t]


def _resolve_ranking(spec: MethodSpec, t: str, art: _LabArtifacts,
                     table: TransferTable,
                     done: Mapping[str, Mapping[str, Ranking]]) -> Ranking:
    universe = art.universe
    inters = list(universe.intermediates)
    if spec.kind is MethodKind.SIZE:
        r = rank_by_size(universe.metas(), inters, t)
    elif spec.kind is MethodKind.RANDOM:
        r = rank_random(inters, t, int(spec.params["seed"]))
    elif spec.kind is MethodKind.EMBEDDING_COSINE:
        emb_kind = str(spec.params["embedding"])
        embs = (art.text_embeddings if emb_kind == EmbeddingKind.TEXT_MEAN.value
                else art.task_embeddings)
        r = rank_by_cosine(embs, inters, t, method=spec.name)
    elif spec.kind is MethodKind.SCORE_TABLE:
        source = str(spec.params["source"])
        if source == "fsft":
            r = rank_by_scores(art.fsft_scores(t), t, method=spec.name)
        elif source == "fs_taskemb":
            r = fs_taskemb_rank(art.fs_taskemb_pairs(t), t)
        elif source == "oracle":
            col = {s: table.score(s, t) for s in inters}
            r = rank_by_scores(col, t, method=spec.name)
        else:
            raise UnsupportedConfigError(f"unknown score source {source!r}")
    elif spec.kind is MethodKind.FUSED:
        components = list(spec.params["components"])
        missing = [m for m in components if m not in done]
        if missing:
            raise SchemaError(f"fused method {spec.name!r} needs components "
                              f"ranked first: {missing}")
        r = rrf_fuse([done[m][t] for m in components],
                     c=float(spec.params.get("c", 60.0)))
    else:  # pragma: no cover
        raise UnsupportedConfigError(f"unhandled method kind {spec.kind}")
    if spec.params.get("prefer_same_type"):
        r = type_prerank(r, universe.metas(), universe.tasks[t].meta.task_type)
    return r


def run_benchmark(universe: ToyUniverse, methods: Sequence[MethodSpec],
                  cfg: ToyTrainConfig, table: TransferTable | None = None,
                  target_example_cap: int | None = None,
                  few_shot_steps: int | None = None) -> AggregatedReport:
    """Rank every target with every method and score against the table.

    ``target_example_cap`` limits the target examples visible to the
    selection methods (the ground-truth table is unaffected);
    ``few_shot_steps`` overrides the fine-tuning budget of the few-shot
    methods.  Emits one aggregated report.
    """
    art = _LabArtifacts(universe, cfg, target_example_cap,
                        few_shot_steps or cfg.few_shot_steps)
    if table is None:
        table = build_transfer_table(universe, cfg, probes=art.probes)
    rankings: dict[str, dict[str, Ranking]] = {}
    rows = {}
    for spec in methods:
        rankings[spec.name] = {}
        for t in universe.targets:
            r = _resolve_ranking(spec, t, art, table, rankings)
            rankings[spec.name][t] = r
            rows[(spec.name, t)] = metric_row(r, table)
    return aggregate(rows, universe.metas())


def sweep_few_shot_steps(universe: ToyUniverse, methods: Sequence[MethodSpec],
                         cfg: ToyTrainConfig, steps_list: Sequence[int],
                         table: TransferTable | None = None
                         ) -> dict[int, AggregatedReport]:
    """One report per few-shot budget, on a shared ground-truth table."""
    if table is None:
        table = build_transfer_table(universe, cfg)
    return {n: run_benchmark(universe, methods, cfg, table=table,
                             few_shot_steps=n)
            for n in steps_list}


def sweep_target_examples(universe: ToyUniverse, methods: Sequence[MethodSpec],
                          cfg: ToyTrainConfig, caps: Sequence[int],
                          table: TransferTable | None = None
                          ) -> dict[int, AggregatedReport]:
    """One report per visible-target-example budget, shared table."""
    if table is None:
        table = build_transfer_table(universe, cfg)
    return {cap: run_benchmark(universe, methods, cfg, table=table,
                               target_example_cap=cap)
            for cap in caps}
