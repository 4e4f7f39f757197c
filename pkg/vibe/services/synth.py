"""Synthetic evolving corpora with planted shared and period topics.

Generative Process
------------------
- Topic-word distributions are drawn once from a symmetric Dirichlet with
  concentration 1 / topic_sharpness: `n_shared_topics` shared topics and
  `n_period_topics` topics per period.
- Each document draws shared weights from a flat Dirichlet; its label is
  the dominant shared topic. Period weights come from a flat Dirichlet, or,
  with probability `label_topic_correlation`, sit entirely on period topic
  (label mod n_period_topics).
- Words are drawn from mix_shared * shared mixture
  + (1 - mix_shared) * period mixture; lengths are uniform in doc_length.
- Period p spans [start + p * period_seconds, start + (p + 1) * period_seconds).
- Topic draws use the first child of SeedSequence(seed); period p uses
  child p + 1, so periods are generated independently.
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split

from vibe.core.errors import InvalidInputError, ShapeMismatchError
from vibe.schemas.config import DriftSpec
from vibe.schemas.documents import DatasetRecord, GroundTruthRecord, LabelMap, TimedDocument
from vibe.services.corpus import write_dataset
from vibe.topics.state import ModelState

logger = logging.getLogger(__name__)

PROBE_MAX_ITER = 200


@dataclass(frozen=True)
class SyntheticCorpus:
    """Generated documents with their planted structure.

    Attributes:
        docs: Documents in time order, `period` and `label` set.
        truth: One ground-truth record per document.
        label_map: Label strings `topic_<k>` for shared topic k.
        shared_topics: (n_shared_topics, V) word distributions.
        period_topics: (periods, n_period_topics, V) word distributions.
    """

    docs: list[TimedDocument]
    truth: list[GroundTruthRecord]
    label_map: LabelMap
    shared_topics: np.ndarray
    period_topics: np.ndarray


def word_list(vocab_size: int) -> list[str]:
    width = max(4, len(str(vocab_size - 1)))
    return [f"w{idx:0{width}d}" for idx in range(vocab_size)]


def _topics(rng: np.random.Generator, count: int, spec: DriftSpec) -> np.ndarray:
    alpha = np.full(spec.vocab_size, 1.0 / spec.topic_sharpness)
    return rng.dirichlet(alpha, size=count)


def _timestamps(rng: np.random.Generator, period: int, spec: DriftSpec) -> np.ndarray:
    n = spec.docs_per_period
    if spec.period_seconds >= n:
        offsets = np.sort(rng.choice(spec.period_seconds, size=n, replace=False))
    else:
        offsets = np.sort(rng.integers(0, spec.period_seconds, size=n))
    return spec.start_timestamp + period * spec.period_seconds + offsets


def _generate_period(
    period: int,
    seed: np.random.SeedSequence,
    spec: DriftSpec,
    shared_topics: np.ndarray,
    period_topics: np.ndarray,
    words: Sequence[str],
) -> tuple[list[TimedDocument], list[GroundTruthRecord]]:
    rng = np.random.default_rng(seed)
    stamps = _timestamps(rng, period, spec)
    low, high = spec.doc_length
    docs: list[TimedDocument] = []
    truth: list[GroundTruthRecord] = []
    for index in range(spec.docs_per_period):
        shared_weights = rng.dirichlet(np.ones(spec.n_shared_topics))
        label = int(np.argmax(shared_weights))
        if rng.random() < spec.label_topic_correlation:
            period_weights = np.zeros(spec.n_period_topics)
            period_weights[label % spec.n_period_topics] = 1.0
        else:
            period_weights = rng.dirichlet(np.ones(spec.n_period_topics))
        word_dist = spec.mix_shared * (shared_weights @ shared_topics) + (
            1.0 - spec.mix_shared
        ) * (period_weights @ period_topics)
        word_dist = word_dist / word_dist.sum()
        length = int(rng.integers(low, high + 1))
        counts = rng.multinomial(length, word_dist)
        tokens = np.repeat(np.arange(spec.vocab_size), counts)
        tokens = rng.permutation(tokens)
        doc_id = f"p{period}-d{index:05d}"
        docs.append(
            TimedDocument(
                id=doc_id,
                tokens=tuple(words[token] for token in tokens),
                timestamp=int(stamps[index]),
                label=label,
                period=period,
            )
        )
        truth.append(
            GroundTruthRecord(
                doc_id=doc_id,
                period=period,
                label=label,
                shared_weights=shared_weights.tolist(),
                period_weights=period_weights.tolist(),
            )
        )
    return docs, truth


def gen_corpus(spec: DriftSpec) -> SyntheticCorpus:
    """Generate a corpus; identical specs give identical corpora."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.periods + 1)
    topic_rng = np.random.default_rng(children[0])
    shared_topics = _topics(topic_rng, spec.n_shared_topics, spec)
    period_topics = np.stack(
        [_topics(topic_rng, spec.n_period_topics, spec) for _period in range(spec.periods)]
    )
    words = word_list(spec.vocab_size)
    docs: list[TimedDocument] = []
    truth: list[GroundTruthRecord] = []
    for period in range(spec.periods):
        period_docs, period_truth = _generate_period(
            period, children[period + 1], spec, shared_topics, period_topics[period], words
        )
        docs.extend(period_docs)
        truth.extend(period_truth)
    logger.info(
        "Synthetic corpus generated",
        extra={"docs": len(docs), "periods": spec.periods, "seed": spec.seed},
    )
    return SyntheticCorpus(
        docs=docs,
        truth=truth,
        label_map=LabelMap(labels=[f"topic_{k}" for k in range(spec.n_shared_topics)]),
        shared_topics=shared_topics,
        period_topics=period_topics,
    )


def to_records(corpus: SyntheticCorpus) -> list[DatasetRecord]:
    return [
        DatasetRecord(
            id=doc.id,
            text=" ".join(doc.tokens),
            timestamp=doc.timestamp,
            label=corpus.label_map.labels[doc.label] if doc.label is not None else None,
        )
        for doc in corpus.docs
    ]


def write_ground_truth(truth: Sequence[GroundTruthRecord], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in truth:
            handle.write(record.model_dump_json() + "\n")


def read_ground_truth(path: Path) -> list[GroundTruthRecord]:
    with path.open("r", encoding="utf-8") as handle:
        return [GroundTruthRecord.model_validate_json(line) for line in handle if line.strip()]


def write_corpus(corpus: SyntheticCorpus, dataset_path: Path, truth_path: Path) -> int:
    """Write the dataset file and its ground-truth sidecar."""
    count = write_dataset(to_records(corpus), dataset_path)
    write_ground_truth(corpus.truth, truth_path)
    return count


def _probe_accuracy(features: np.ndarray, periods: np.ndarray, seed: int) -> float:
    _counts, per_class = np.unique(periods, return_counts=True)
    stratify = periods if per_class.min() >= 2 else None
    x_train, x_test, y_train, y_test = train_test_split(
        features, periods, test_size=0.5, random_state=seed, stratify=stratify
    )
    probe = LogisticRegression(max_iter=PROBE_MAX_ITER, random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=ConvergenceWarning)
        probe.fit(x_train, y_train)
    return float(probe.score(x_test, y_test))


def probe_disentanglement(
    variant_means: np.ndarray,
    shared_means: np.ndarray,
    periods: Sequence[int] | np.ndarray,
    seed: int = 0,
) -> tuple[float, float]:
    """Held-out accuracy of linear period probes on z^x and z^s means.

    Each probe is a multinomial logistic regression fitted on a seeded,
    stratified half of the documents and scored on the other half.

    Returns:
        tuple[float, float]: (acc_zx, acc_zs).

    Raises:
        InvalidInputError: If fewer than two periods are represented.
        ShapeMismatchError: If the inputs have different row counts.
    """
    period_ids = np.asarray(periods)
    if len(np.unique(period_ids)) < 2:
        raise InvalidInputError("Probing needs at least two periods.")
    if not len(variant_means) == len(shared_means) == len(period_ids):
        raise ShapeMismatchError(
            "Latent means and period ids must align.",
            {
                "variant": len(variant_means),
                "shared": len(shared_means),
                "periods": len(period_ids),
            },
        )
    acc_zx = _probe_accuracy(np.asarray(variant_means), period_ids, seed)
    acc_zs = _probe_accuracy(np.asarray(shared_means), period_ids, seed)
    logger.info("Probe complete", extra={"acc_zx": acc_zx, "acc_zs": acc_zs})
    return acc_zx, acc_zs


def latent_means(state: ModelState, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-view (z^x mean, z^s mean) of documents read as past documents."""
    variant = state.model.enc_x.forward(counts)[0].mean
    shared = state.model.approx_x.forward(counts)[0].mean
    return variant, shared
