"""Document embeddings as count-weighted means of learned word vectors."""

from __future__ import annotations

import csv
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vibe.core.errors import InvalidInputError, ShapeMismatchError
from vibe.topics.layers import Block, Grads, uniform_init


def bag_weights(counts: np.ndarray) -> np.ndarray:
    """Row-normalise counts; all-zero rows stay zero."""
    totals = counts.sum(axis=-1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts, dtype=np.float64), where=totals > 0)


@dataclass(eq=False)
class EmbeddingProvider(Block):
    """Embedding bag over the vocabulary, optionally overridden per document.

    Attributes:
        word_embeddings: (V, E) learned word vectors.
        precomputed: Fixed document vectors keyed by document id. When set,
            documents are looked up here and the word vectors receive no
            gradient.
    """

    word_embeddings: np.ndarray
    precomputed: dict[str, np.ndarray] | None = field(default=None)

    names = ("word_embeddings",)

    @classmethod
    def create(cls, rng: np.random.Generator, vocab_size: int, embed_dim: int) -> EmbeddingProvider:
        return cls(word_embeddings=uniform_init(rng, vocab_size, (vocab_size, embed_dim)))

    @property
    def dim(self) -> int:
        return int(self.word_embeddings.shape[1])

    @property
    def trainable(self) -> bool:
        return self.precomputed is None

    def embed(
        self,
        counts: np.ndarray,
        doc_ids: Sequence[str] | None = None,
    ) -> np.ndarray:
        """Embed count rows (B, V) or a single count vector (V,).

        With precomputed vectors the rows are looked up by `doc_ids`; a
        single count vector takes a one-element `doc_ids` and returns (E,).

        Raises:
            InvalidInputError: If precomputed vectors are in use and
                `doc_ids` is absent or names an unknown document.
            ShapeMismatchError: If `doc_ids` and the count rows differ in number.
        """
        if self.precomputed is None:
            return bag_weights(counts) @ self.word_embeddings
        if doc_ids is None:
            raise InvalidInputError("Precomputed embeddings need document ids.")
        rows = 1 if counts.ndim == 1 else counts.shape[0]
        if len(doc_ids) != rows:
            raise ShapeMismatchError(
                "Document ids and count rows differ in number.",
                {"ids": len(doc_ids), "rows": rows},
            )
        missing = [doc_id for doc_id in doc_ids if doc_id not in self.precomputed]
        if missing:
            raise InvalidInputError(
                "Documents missing from the precomputed embeddings.",
                {"missing": missing[:10], "count": len(missing)},
            )
        table = np.stack([self.precomputed[doc_id] for doc_id in doc_ids])
        return table[0] if counts.ndim == 1 else table

    def backward(self, counts: np.ndarray, d_embedded: np.ndarray) -> Grads:
        if not self.trainable:
            return self.zero_grads()
        return {"word_embeddings": bag_weights(counts).T @ d_embedded}


def read_precomputed(path: Path, embed_dim: int | None = None) -> dict[str, np.ndarray]:
    """Read a tab-separated `doc_id e_1 ... e_E` file.

    Raises:
        ShapeMismatchError: If rows differ in width or disagree with `embed_dim`.
    """
    table: dict[str, np.ndarray] = {}
    with path.open("r", encoding="utf-8", newline="") as handle:
        for row in csv.reader(handle, delimiter="\t"):
            if not row:
                continue
            vector = np.array([float(value) for value in row[1:]], dtype=np.float64)
            expected = embed_dim if embed_dim is not None else vector.size
            if vector.size != expected:
                raise ShapeMismatchError(
                    "Precomputed embedding has the wrong width.",
                    {"doc_id": row[0], "width": vector.size, "expected": expected},
                )
            embed_dim = expected
            table[row[0]] = vector
    return table


def write_precomputed(table: Mapping[str, np.ndarray], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        for doc_id, vector in table.items():
            writer.writerow([doc_id, *(repr(float(value)) for value in vector)])
