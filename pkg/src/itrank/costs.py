"""Symbolic complexity formulas and MAC estimates per selection method.

``f`` is the MAC cost of one forward pass over the full target set, ``b``
the corresponding backward pass (``b = b_ratio * f``), ``n`` the number
of candidate source models and ``e`` the number of training epochs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import DomainError, SchemaError


class CostMethod(str, enum.Enum):
    METADATA = "metadata"
    TEXT_OR_SENT_EMB = "text_or_sent_emb"
    TASKEMB = "taskemb"
    KNN_OR_LINEAR = "knn_or_linear"
    FSFT_OR_FS_TASKEMB = "fsft_or_fs_taskemb"


COMPLEXITY_FORMULAS = {
    CostMethod.METADATA: "1",
    CostMethod.TEXT_OR_SENT_EMB: "f",
    CostMethod.TASKEMB: "(e + 1) f + e b",
    CostMethod.KNN_OR_LINEAR: "n f",
    CostMethod.FSFT_OR_FS_TASKEMB: "2 n e f + n e b",
}


@dataclass(frozen=True)
class CostParams:
    n: int = 42
    e: float = 1.0
    f_macs: float = 1.10e13
    b_ratio: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise SchemaError("n must be >= 1")
        if self.f_macs <= 0:
            raise SchemaError("f_macs must be positive")
        if self.b_ratio <= 0:
            raise SchemaError("b_ratio must be positive")
        if self.e < 0:
            raise SchemaError("e must be >= 0")


def complexity(method: CostMethod | str, p: CostParams) -> float:
    """Evaluate a method's data-pass formula as a MAC estimate.

    Metadata lookups cost no model passes and return 0.
    """
    try:
        method = CostMethod(method)
    except ValueError:
        raise DomainError(f"unknown cost method {method!r}") from None
    f = p.f_macs
    b = p.b_ratio * f
    if method is CostMethod.METADATA:
        return 0.0
    if method is CostMethod.TEXT_OR_SENT_EMB:
        return f
    if method is CostMethod.TASKEMB:
        return (p.e + 1) * f + p.e * b
    if method is CostMethod.KNN_OR_LINEAR:
        return p.n * f
    return 2 * p.n * p.e * f + p.n * p.e * b


def calibrate_f(per_example_macs: float, examples: int) -> float:
    """Forward-pass cost of the whole target set from a per-example cost."""
    if per_example_macs <= 0 or examples < 0:
        raise DomainError("per-example MACs must be positive, examples >= 0")
    return per_example_macs * examples


def cost_report(n: int = 42, f_macs: float = 1.10e13, b_ratio: float = 1.0,
                e_taskemb: float = 15.0,
                e_fewshot: float = 1.0) -> list[tuple[str, str, float]]:
    """Rows of (method, complexity formula, MACs) for a standard setting."""
    rows = []
    for method in CostMethod:
        e = e_taskemb if method is CostMethod.TASKEMB else e_fewshot
        p = CostParams(n=n, e=e, f_macs=f_macs, b_ratio=b_ratio)
        rows.append((method.value, COMPLEXITY_FORMULAS[method],
                     complexity(method, p)))
    return rows
