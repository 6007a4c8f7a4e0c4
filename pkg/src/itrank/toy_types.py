"""Configuration and data containers for the synthetic transfer lab."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import TaskMeta
from .errors import SchemaError


@dataclass(frozen=True)
class ToyUniverseConfig:
    """Shape of the synthetic universe.

    The planted-copy guarantee (the drift-0 copy of a target tops its
    transfer column) relies on the low-resource cap binding:
    intermediates should see far more examples than ``target_train_cap``
    so that a transferred probe generalizes better than anything fit to
    the capped target data alone.
    """

    n_intermediates: int = 8
    n_targets: int = 3
    dim: int = 8
    n_classes: int = 3
    cluster_separation: float = 3.0
    domain_drift: float = 0.0
    examples_per_intermediate: int = 4000
    target_train_cap: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("n_intermediates", "n_targets", "dim", "n_classes",
                     "examples_per_intermediate", "target_train_cap"):
            if getattr(self, name) < 1:
                raise SchemaError(f"{name} must be >= 1")
        if self.cluster_separation < 0 or self.domain_drift < 0:
            raise SchemaError("separation and drift must be non-negative")


@dataclass(frozen=True)
class ToyTrainConfig:
    epochs_max: int = 15
    early_stop_patience: int = 3
    learning_rate: float = 0.1
    batch_size: int = 64
    restarts: int = 5
    few_shot_steps: int = 50

    def __post_init__(self):
        if self.early_stop_patience >= self.epochs_max and self.epochs_max > 0:
            raise SchemaError("patience must be smaller than epochs_max")
        if self.batch_size < 1 or self.restarts < 1 or self.few_shot_steps < 0:
            raise SchemaError("batch_size/restarts/few_shot_steps out of range")
        if self.epochs_max < 0 or self.learning_rate < 0:
            raise SchemaError("epochs_max and learning_rate must be >= 0")


@dataclass(frozen=True)
class LabeledData:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise SchemaError("x must be (n, dim) with one label per row")
        x = x.copy(); y = y.copy()
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class ToyTask:
    meta: TaskMeta
    train: LabeledData
    val: LabeledData
    test: LabeledData


@dataclass(frozen=True)
class ToyUniverse:
    cfg: ToyUniverseConfig
    tasks: Mapping[str, ToyTask]
    intermediates: tuple[str, ...]
    targets: tuple[str, ...]

    def metas(self) -> dict[str, TaskMeta]:
        return {name: task.meta for name, task in self.tasks.items()}
