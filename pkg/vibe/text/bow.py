"""Sparse bag-of-words vectors and their dense/sparse matrix forms."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class BowVector:
    """Word counts over a fixed vocabulary.

    Attributes:
        counts: Word id to strictly positive count.
        total: Sum of all counts.
    """

    counts: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(count <= 0 for count in self.counts.values()):
            raise ValueError("BowVector counts must be strictly positive.")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __add__(self, other: BowVector) -> BowVector:
        merged = dict(self.counts)
        for word_id, count in other.counts.items():
            merged[word_id] = merged.get(word_id, 0) + count
        return BowVector(merged)

    def to_dense(self, vocab_size: int) -> np.ndarray:
        """Return a float64 count vector of length `vocab_size`."""
        dense = np.zeros(vocab_size, dtype=np.float64)
        for word_id, count in self.counts.items():
            dense[word_id] = count
        return dense


def bows_to_csr(bows: Sequence[BowVector], vocab_size: int) -> sparse.csr_matrix:
    """Stack BoW vectors into a CSR count matrix, one row per vector."""
    rows: list[int] = []
    cols: list[int] = []
    data: list[float] = []
    for row, bow in enumerate(bows):
        for word_id in sorted(bow.counts):
            rows.append(row)
            cols.append(word_id)
            data.append(float(bow.counts[word_id]))
    return sparse.csr_matrix(
        (data, (rows, cols)), shape=(len(bows), vocab_size), dtype=np.float64
    )


def bows_to_dense(bows: Sequence[BowVector], vocab_size: int) -> np.ndarray:
    """Stack BoW vectors into a dense (n, vocab_size) float64 matrix."""
    return bows_to_csr(bows, vocab_size).toarray()
