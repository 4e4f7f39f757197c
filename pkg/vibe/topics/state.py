"""The full trainable state: topic model, embedding provider and heads."""

from __future__ import annotations

import copy
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from vibe.topics.embedding import EmbeddingProvider
from vibe.topics.layers import Block, ClassifierHead
from vibe.topics.model import NTM_BLOCKS, VibeModel

STAGE1_BLOCKS = (*NTM_BLOCKS, "embed", "task1")
STAGE2_HEADS = ("task2", "time2")


@dataclass(eq=False)
class ModelState:
    """Everything a checkpoint holds, in declaration order.

    Attributes:
        model: Topic model.
        provider: Document embeddings.
        task1: Stage-1 task head over [embedding; r^x mean].
        task2: Stage-2 task head over sphere features.
        time2: Stage-2 time head over sphere features.
    """

    model: VibeModel
    provider: EmbeddingProvider
    task1: ClassifierHead
    task2: ClassifierHead
    time2: ClassifierHead

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        vocab_size: int,
        n_topics: int,
        hidden: int,
        classes: int,
        time_buckets: int,
        embed_dim: int,
    ) -> ModelState:
        model = VibeModel.create(rng, vocab_size, n_topics, hidden)
        provider = EmbeddingProvider.create(rng, vocab_size, embed_dim)
        sphere_dim = embed_dim + vocab_size
        return cls(
            model=model,
            provider=provider,
            task1=ClassifierHead.create(rng, embed_dim + n_topics, hidden, classes),
            task2=ClassifierHead.create(rng, sphere_dim, hidden, classes),
            time2=ClassifierHead.create(rng, sphere_dim, hidden, time_buckets),
        )

    @property
    def classes(self) -> int:
        return self.task1.classes

    @property
    def time_buckets(self) -> int:
        return self.time2.classes

    @property
    def dims(self) -> tuple[int, int, int, int, int, int]:
        """(V, K, hidden, C, T, E)."""
        return (
            self.model.vocab_size,
            self.model.n_topics,
            self.model.hidden,
            self.classes,
            self.time_buckets,
            self.provider.dim,
        )

    def blocks(self) -> Iterator[tuple[str, Block]]:
        yield from self.model.blocks()
        yield "embed", self.provider
        yield "task1", self.task1
        yield "task2", self.task2
        yield "time2", self.time2

    def parameters(self, blocks: tuple[str, ...] | None = None) -> dict[str, np.ndarray]:
        """Tensors keyed `<block>.<name>`, optionally restricted to `blocks`."""
        return {
            f"{prefix}.{name}": array
            for prefix, block in self.blocks()
            if blocks is None or prefix in blocks
            for name, array in block.params().items()
        }

    def copy(self) -> ModelState:
        return copy.deepcopy(self)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(array)) for array in self.parameters().values())
