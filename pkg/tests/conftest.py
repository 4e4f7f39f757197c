"""Pytest configuration and shared fixtures."""

from __future__ import annotations

import logging
import os

import numpy as np
import pytest

os.environ.setdefault("ENV", "test")

from vibe.schemas.config import DriftSpec, TrainConfig  # noqa: E402
from vibe.schemas.documents import TimedDocument  # noqa: E402
from vibe.topics.state import ModelState  # noqa: E402


@pytest.fixture(autouse=True)
def restore_root_logging():
    """Undo `configure_logging` calls made by CLI tests."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
    logging.captureWarnings(False)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so numeric tests are reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_state(rng: np.random.Generator) -> ModelState:
    """A small model: V=12, K=3, hidden=8, two classes, two buckets, E=4."""
    return ModelState.create(rng, 12, 3, 8, 2, 2, 4)


@pytest.fixture
def tiny_counts(rng: np.random.Generator) -> np.ndarray:
    """Five nonzero count rows over a 12-word vocabulary."""
    counts = rng.integers(0, 4, size=(5, 12)).astype(np.float64)
    counts[:, 0] += 1.0
    return counts


@pytest.fixture
def toy_docs() -> list[TimedDocument]:
    """Forty labeled documents with one word per class and shared filler."""
    docs: list[TimedDocument] = []
    for index in range(40):
        label = index % 2
        marker = "vaccine" if label == 0 else "lockdown"
        docs.append(
            TimedDocument(
                id=f"d{index:03d}",
                tokens=(marker, "covid", f"day{index // 10}", "news"),
                timestamp=1_000 + 10 * index,
                label=label,
            )
        )
    return docs


@pytest.fixture
def small_config() -> TrainConfig:
    """Fast training configuration for pipeline-level tests."""
    return TrainConfig(
        seed=3,
        batch_size=8,
        learning_rate=1e-2,
        warmup_epochs=1,
        stage1_epochs=2,
        stage2_epochs=2,
        n_topics=3,
        hidden=8,
        embed_dim=4,
        retrieval_depth=2,
        max_vocab=200,
    )


@pytest.fixture
def small_spec() -> DriftSpec:
    """Three short periods over a 60-word vocabulary."""
    return DriftSpec(
        vocab_size=60,
        n_shared_topics=2,
        n_period_topics=2,
        periods=3,
        docs_per_period=40,
        doc_length=(10, 20),
        seed=5,
    )
