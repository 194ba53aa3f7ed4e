"""Task-conditioning vectors derived from instruction text.

The default provider hashes each token to a fixed random direction and
averages them, giving related instructions overlapping embeddings without any
learned weights. A table provider loads precomputed sentence embeddings from
disk for runs that want to plug in an external text encoder, and a one-hot
provider removes language structure for ablations.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Iterable, Protocol, Sequence

import numpy as np

from ..core import TaskSpec

__all__ = [
    "TaskEmbeddingProvider",
    "HashedBagOfWordsEmbedding",
    "TableTextEmbedding",
    "OneHotTaskEmbedding",
    "check_distinct",
]


class TaskEmbeddingProvider(Protocol):
    """Deterministic map from instruction text to a fixed real vector."""

    @property
    def dim(self) -> int: ...

    def vector(self, instruction: str) -> np.ndarray: ...


def check_distinct(provider: TaskEmbeddingProvider, instructions: Iterable[str]) -> None:
    """Reject providers that collapse two distinct instructions together."""
    seen: dict[bytes, str] = {}
    for text in instructions:
        key = provider.vector(text).tobytes()
        if key in seen and seen[key] != text:
            raise ValueError(
                f"embedding collision between {seen[key]!r} and {text!r}"
            )
        seen[key] = text


def _token_direction(token: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim)


class HashedBagOfWordsEmbedding:
    """Average of per-token hash directions, L2-normalized.

    Instructions sharing words share embedding mass, so competence can carry
    between tasks whose descriptions overlap.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self._dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def vector(self, instruction: str) -> np.ndarray:
        tokens = instruction.lower().split()
        if not tokens:
            raise ValueError("instruction must contain at least one token")
        acc = np.zeros(self._dim)
        for tok in tokens:
            if tok not in self._token_cache:
                self._token_cache[tok] = _token_direction(tok, self._dim)
            acc += self._token_cache[tok]
        acc /= len(tokens)
        norm = np.linalg.norm(acc)
        if norm == 0.0:
            raise ValueError(f"degenerate embedding for {instruction!r}")
        return (acc / norm).astype(np.float32)


class TableTextEmbedding:
    """Embeddings looked up from a precomputed instruction -> vector table."""

    def __init__(self, table: dict[str, Sequence[float]]):
        if not table:
            raise ValueError("embedding table is empty")
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dims in table: {sorted(dims)}")
        self._dim = dims.pop()
        self._table = {k: np.asarray(v, dtype=np.float32) for k, v in table.items()}
        check_distinct(self, self._table.keys())

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "TableTextEmbedding":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    @property
    def dim(self) -> int:
        return self._dim

    def vector(self, instruction: str) -> np.ndarray:
        try:
            return self._table[instruction]
        except KeyError:
            raise KeyError(f"no embedding for instruction {instruction!r}") from None


class OneHotTaskEmbedding:
    """Indicator embedding per task; the no-language ablation arm."""

    def __init__(self, tasks: Sequence[TaskSpec]):
        self._index = {t.instruction: i for i, t in enumerate(tasks)}
        if len(self._index) != len(tasks):
            raise ValueError("instructions must be unique for one-hot embeddings")
        self._dim = len(tasks)

    @property
    def dim(self) -> int:
        return self._dim

    def vector(self, instruction: str) -> np.ndarray:
        vec = np.zeros(self._dim, dtype=np.float32)
        vec[self._index[instruction]] = 1.0
        return vec
