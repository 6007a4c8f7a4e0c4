"""Deterministic RNG substreams keyed by a seed plus string/int tokens."""
from __future__ import annotations

import hashlib

import numpy as np


def _digest(tokens: tuple) -> int:
    h = hashlib.sha256()
    for tok in tokens:
        h.update(repr(tok).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:16], "big")


def substream(seed: int, *tokens: str | int) -> np.random.Generator:
    """A generator whose stream depends only on (seed, tokens).

    Tokens are hashed, so streams for different token tuples are
    independent and stable across runs and platforms.
    """
    return np.random.default_rng(
        [int(seed) & 0xFFFFFFFFFFFFFFFF, _digest(tokens)])


def derive_seed(seed: int, *tokens: str | int) -> int:
    """A stable integer sub-seed keyed by (seed, tokens)."""
    return _digest((int(seed),) + tokens) & 0x7FFFFFFFFFFFFFFF
