"""Service-layer logic for dataset ingestion, vocabularies and temporal splits.

Split Semantics
---------------
- **Relative mode**: documents are ordered by (timestamp, id). The earliest
  50% train, the latest 30% test, and the middle 20% is divided into a
  seeded random 5%-of-total validation sample and the remaining 15% golden
  adaptive data (kept in time order).
- **Absolute mode**: two or three increasing cut points c1 < c2 [< c3]:
  train is ts < c1, the middle segment c1 <= ts < c2, test c2 <= ts [< c3].
  The middle segment is divided 1:3 into validation and golden adaptive
  data with the same seeded sampling. Documents at or after c3 are unused.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import ValidationError

from vibe.core.errors import (
    BadBoundariesError,
    EmptyVocabularyError,
    InvalidInputError,
)
from vibe.schemas.documents import (
    DatasetRecord,
    LabelMap,
    SplitSpec,
    TimedDocument,
    Vocabulary,
)
from vibe.text.bow import BowVector, bows_to_dense
from vibe.text.preprocess import load_stopwords, tokenize

logger = logging.getLogger(__name__)

DEFAULT_MAX_VOCAB = 20_000
MIN_RELATIVE_DOCS = 20


def records_to_documents(
    records: Iterable[DatasetRecord],
    label_map: LabelMap | None = None,
) -> tuple[list[TimedDocument], LabelMap]:
    """Tokenize records and map label strings to class ids.

    Labels receive ids in first-seen order. Passing an existing `label_map`
    (e.g. the one saved with a checkpoint) keeps ids stable and appends
    unseen labels at the end.

    Args:
        records: Validated dataset records.
        label_map: Optional mapping to extend.

    Returns:
        tuple[list[TimedDocument], LabelMap]: Documents and the label mapping.
    """
    labels = list(label_map.labels) if label_map else []
    label_ids = {label: idx for idx, label in enumerate(labels)}
    docs: list[TimedDocument] = []
    empty = 0
    for record in records:
        class_id: int | None = None
        if record.label is not None:
            if record.label not in label_ids:
                label_ids[record.label] = len(labels)
                labels.append(record.label)
            class_id = label_ids[record.label]
        tokens = tuple(tokenize(record.text))
        if not tokens:
            empty += 1
        docs.append(
            TimedDocument(
                id=record.id,
                tokens=tokens,
                timestamp=record.timestamp,
                label=class_id,
            )
        )
    if empty:
        logger.warning("Documents with no tokens after preprocessing", extra={"count": empty})
    return docs, LabelMap(labels=labels)


def read_dataset(
    path: Path,
    label_map: LabelMap | None = None,
) -> tuple[list[TimedDocument], LabelMap]:
    """Read a JSON Lines dataset file into documents.

    Raises:
        InvalidInputError: If a line is not a valid record.
    """
    records: list[DatasetRecord] = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(DatasetRecord.model_validate_json(line))
            except ValidationError as exc:
                raise InvalidInputError(
                    f"Invalid dataset record at line {line_no}.",
                    {"path": str(path), "line": line_no, "errors": exc.errors(include_url=False)},
                ) from exc
    logger.info("Dataset loaded", extra={"path": str(path), "records": len(records)})
    return records_to_documents(records, label_map)


def write_dataset(records: Iterable[DatasetRecord], path: Path) -> int:
    """Write records as JSON Lines and return the number written."""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")
            count += 1
    return count


def _ranked_words(
    docs: Iterable[TimedDocument],
    stopwords: frozenset[str],
) -> list[tuple[str, int]]:
    """Non-stopword tokens by descending frequency, ties by the word itself."""
    counts: Counter[str] = Counter()
    for doc in docs:
        counts.update(token for token in doc.tokens if token not in stopwords)
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def build_vocabulary(
    docs: Sequence[TimedDocument],
    max_size: int = DEFAULT_MAX_VOCAB,
    stopwords: frozenset[str] | None = None,
) -> Vocabulary:
    """Keep the `max_size` most frequent non-stopword tokens.

    Word ids follow frequency rank, so the most frequent word gets id 0;
    equal frequencies are ordered lexicographically.

    Raises:
        InvalidInputError: If `max_size` < 1.
        EmptyVocabularyError: If no token survives stopword removal.
    """
    if max_size < 1:
        raise InvalidInputError("max_size must be at least 1.", {"max_size": max_size})
    stop = load_stopwords() if stopwords is None else stopwords
    ranked = _ranked_words(docs, stop)
    if not ranked:
        raise EmptyVocabularyError("Corpus is empty after stopword removal.")
    return Vocabulary(words=tuple(word for word, _count in ranked[:max_size]))


def to_bow(doc: TimedDocument, vocab: Vocabulary) -> BowVector:
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped."""
    lookup = vocab.word_to_id
    counts = Counter(lookup[token] for token in doc.tokens if token in lookup)
    return BowVector(dict(counts))


def to_bows(docs: Sequence[TimedDocument], vocab: Vocabulary) -> list[BowVector]:
    """Convert documents to BoW vectors, preserving order."""
    return [to_bow(doc, vocab) for doc in docs]


def _sample_validation(
    middle: list[TimedDocument],
    n_validation: int,
    seed: int,
) -> tuple[list[str], list[str]]:
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(len(middle), size=n_validation, replace=False).tolist())
    validation = [doc.id for idx, doc in enumerate(middle) if idx in chosen]
    golden = [doc.id for idx, doc in enumerate(middle) if idx not in chosen]
    return validation, golden


def temporal_split(
    docs: Sequence[TimedDocument],
    mode: Literal["relative", "absolute"] = "relative",
    cut_points: Sequence[int] | None = None,
    seed: int = 0,
) -> SplitSpec:
    """Partition documents by time into train/validation/golden/test.

    Args:
        docs: Documents to split.
        mode: `relative` (percentages) or `absolute` (timestamp cut points).
        cut_points: Required for absolute mode.
        seed: Seed for the validation sample inside the middle segment.

    Returns:
        SplitSpec: Disjoint id lists ordered by time.

    Raises:
        InvalidInputError: Relative mode with fewer than 20 documents.
        BadBoundariesError: Absolute mode without increasing cut points.
    """
    ordered = sorted(docs, key=lambda doc: (doc.timestamp, doc.id))
    n = len(ordered)

    if mode == "relative":
        if n < MIN_RELATIVE_DOCS:
            raise InvalidInputError(
                "Relative split needs at least 20 documents.", {"documents": n}
            )
        n_train = n * 50 // 100
        n_test = n * 30 // 100
        n_validation = n * 5 // 100
        train = ordered[:n_train]
        middle = ordered[n_train : n - n_test]
        test = ordered[n - n_test :]
        boundaries = [middle[0].timestamp, test[0].timestamp]
    else:
        if cut_points is None or len(cut_points) not in (2, 3):
            raise BadBoundariesError(
                "Absolute split needs two or three cut points.",
                {"cut_points": list(cut_points or [])},
            )
        boundaries = [int(point) for point in cut_points]
        if any(low >= high for low, high in zip(boundaries, boundaries[1:], strict=False)):
            raise BadBoundariesError(
                "Cut points must be strictly increasing.", {"cut_points": boundaries}
            )
        upper = boundaries[2] if len(boundaries) == 3 else None
        train = [doc for doc in ordered if doc.timestamp < boundaries[0]]
        middle = [doc for doc in ordered if boundaries[0] <= doc.timestamp < boundaries[1]]
        test = [
            doc
            for doc in ordered
            if doc.timestamp >= boundaries[1] and (upper is None or doc.timestamp < upper)
        ]
        n_validation = len(middle) // 4

    validation, golden = _sample_validation(middle, n_validation, seed)
    split = SplitSpec(
        train=[doc.id for doc in train],
        validation=validation,
        golden_adaptive=golden,
        test=[doc.id for doc in test],
        mode=mode,
        boundaries=boundaries,
    )
    logger.info(
        "Temporal split complete",
        extra={
            "mode": mode,
            "train": len(split.train),
            "validation": len(split.validation),
            "golden_adaptive": len(split.golden_adaptive),
            "test": len(split.test),
        },
    )
    return split


def select(docs: Sequence[TimedDocument], ids: Sequence[str]) -> list[TimedDocument]:
    """Return the documents whose ids are in `ids`, in `ids` order."""
    by_id = {doc.id: doc for doc in docs}
    return [by_id[doc_id] for doc_id in ids if doc_id in by_id]


def top_k_words(
    docs: Sequence[TimedDocument],
    k: int,
    stopwords: frozenset[str] | None = None,
) -> set[str]:
    """The `k` most frequent non-stopword tokens (ties lexicographic)."""
    stop = load_stopwords() if stopwords is None else stopwords
    return {word for word, _count in _ranked_words(docs, stop)[:k]}


def vocab_overlap(
    a: Sequence[TimedDocument],
    b: Sequence[TimedDocument],
    k: int = 5000,
    stopwords: frozenset[str] | None = None,
) -> float:
    """Percentage overlap of the top-k vocabularies of two document sets.

    The denominator is the smaller of the two top-k set sizes, which equals k
    whenever both sets hold at least k distinct words.

    Raises:
        InvalidInputError: If `k` < 1.
    """
    if k < 1:
        raise InvalidInputError("k must be at least 1.", {"k": k})
    top_a = top_k_words(a, k, stopwords)
    top_b = top_k_words(b, k, stopwords)
    denominator = min(len(top_a), len(top_b))
    if denominator == 0:
        return 0.0
    return 100.0 * len(top_a & top_b) / denominator


def save_vocabulary(vocab: Vocabulary, path: Path) -> None:
    path.write_text(vocab.model_dump_json(), encoding="utf-8")


def load_vocabulary(path: Path) -> Vocabulary:
    return Vocabulary.model_validate_json(path.read_text(encoding="utf-8"))


def save_label_map(label_map: LabelMap, path: Path) -> None:
    path.write_text(label_map.model_dump_json(), encoding="utf-8")


def load_label_map(path: Path) -> LabelMap:
    return LabelMap.model_validate_json(path.read_text(encoding="utf-8"))


def save_split(split: SplitSpec, path: Path) -> None:
    path.write_text(split.model_dump_json(indent=2), encoding="utf-8")


def load_split(path: Path) -> SplitSpec:
    return SplitSpec.model_validate(json.loads(path.read_text(encoding="utf-8")))


@dataclass(frozen=True)
class EncodedDocs:
    """Documents as aligned arrays for the numeric layers.

    Attributes:
        ids: Document ids in row order.
        counts: (N, V) word counts.
        timestamps: (N,) epoch seconds.
        labels: (N,) class ids, -1 where unknown.
    """

    ids: tuple[str, ...]
    counts: np.ndarray
    timestamps: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def labeled(self) -> bool:
        return bool(len(self.ids)) and bool(np.all(self.labels >= 0))

    def take(self, rows: Sequence[int] | np.ndarray) -> EncodedDocs:
        index = np.asarray(rows, dtype=np.int64)
        return EncodedDocs(
            ids=tuple(self.ids[row] for row in index),
            counts=self.counts[index],
            timestamps=self.timestamps[index],
            labels=self.labels[index],
        )

    def row_of(self) -> dict[str, int]:
        return {doc_id: row for row, doc_id in enumerate(self.ids)}

    def without_labels(self) -> EncodedDocs:
        return EncodedDocs(
            self.ids, self.counts, self.timestamps, np.full(len(self.ids), -1, dtype=np.int64)
        )


def encode_documents(docs: Sequence[TimedDocument], vocab: Vocabulary) -> EncodedDocs:
    """Stack documents into count, timestamp and label arrays."""
    return EncodedDocs(
        ids=tuple(doc.id for doc in docs),
        counts=bows_to_dense(to_bows(docs, vocab), vocab.size),
        timestamps=np.array([doc.timestamp for doc in docs], dtype=np.int64),
        labels=np.array(
            [-1 if doc.label is None else doc.label for doc in docs], dtype=np.int64
        ),
    )


def trainable(docs: Sequence[TimedDocument], vocab: Vocabulary) -> list[TimedDocument]:
    """Drop documents with no in-vocabulary tokens, logging how many."""
    lookup = vocab.word_to_id
    kept = [doc for doc in docs if any(token in lookup for token in doc.tokens)]
    if len(kept) < len(docs):
        logger.warning(
            "Skipping documents without in-vocabulary tokens",
            extra={"skipped": len(docs) - len(kept)},
        )
    return kept
