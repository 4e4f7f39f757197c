"""Lexical retrieval of future documents for past training documents.

Scoring Schemes
---------------
- **tfidf**: raw counts reweighted by idf(t) = ln((1 + n) / (1 + df(t))) + 1
  and L2-normalised per document; the score is cosine similarity.
- **bm25**: Okapi BM25 with k1 = 1.2 and b = 0.75 over in-vocabulary
  tokens; idf values are floored at zero.

Pairing Rules
-------------
- Only pool documents strictly later than the query are eligible.
- Ranking is by descending score, ties by ascending document id, so a
  shorter result list is always a prefix of a longer one.
- A query whose eligible pool scores zero everywhere (e.g. all of its tokens
  are out of vocabulary) is paired with seeded-random eligible documents and
  the pairs are flagged degenerate rather than dropped.
- The same future document may serve many queries; there is no global dedup.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from rank_bm25 import BM25Okapi
from scipy import sparse
from sklearn.feature_extraction.text import TfidfTransformer

from vibe.core.errors import EmptyPoolError, InvalidInputError
from vibe.schemas.documents import PairedSample, TimedDocument, Vocabulary
from vibe.services.corpus import to_bow, to_bows
from vibe.text.bow import bows_to_csr

logger = logging.getLogger(__name__)

Scheme = Literal["tfidf", "bm25"]

BM25_K1 = 1.2
BM25_B = 0.75
DEFAULT_DEPTH = 10


@dataclass
class LexicalIndex:
    """Immutable-after-build index over a document pool.

    Attributes:
        doc_ids: Pool document ids in row order.
        timestamps: Pool timestamps in row order.
        scheme: Scoring scheme.
        vocab: Vocabulary the index was built over.
        idf: Per-term idf weights (length V).
        tfidf_rows: L2-normalised tf-idf rows (tfidf scheme).
        transformer: Fitted tf-idf reweighting (tfidf scheme).
        bm25: BM25 statistics (bm25 scheme): document frequencies, lengths
            and the average length live on this object.
    """

    doc_ids: list[str]
    timestamps: np.ndarray
    scheme: Scheme
    vocab: Vocabulary
    idf: np.ndarray
    tfidf_rows: sparse.csr_matrix | None = None
    transformer: TfidfTransformer | None = None
    bm25: BM25Okapi | None = None

    def scores(self, query: TimedDocument) -> np.ndarray:
        """Relevance of every pool document to `query`."""
        if self.scheme == "tfidf":
            assert self.transformer is not None and self.tfidf_rows is not None
            counts = bows_to_csr([to_bow(query, self.vocab)], self.vocab.size)
            query_row = self.transformer.transform(counts)
            return np.asarray((self.tfidf_rows @ query_row.T).todense()).ravel()
        assert self.bm25 is not None
        lookup = self.vocab.word_to_id
        tokens = [token for token in query.tokens if token in lookup]
        if not tokens or self.bm25.avgdl == 0:
            return np.zeros(len(self.doc_ids))
        return np.nan_to_num(np.asarray(self.bm25.get_scores(tokens), dtype=np.float64))


def build_index(
    pool: Sequence[TimedDocument],
    vocab: Vocabulary,
    scheme: Scheme = "tfidf",
) -> LexicalIndex:
    """Build a deterministic lexical index over `pool`.

    Raises:
        EmptyPoolError: If `pool` is empty.
    """
    if not pool:
        raise EmptyPoolError("Cannot build an index over an empty pool.")
    doc_ids = [doc.id for doc in pool]
    timestamps = np.array([doc.timestamp for doc in pool], dtype=np.int64)

    if scheme == "tfidf":
        counts = bows_to_csr(to_bows(pool, vocab), vocab.size)
        transformer = TfidfTransformer(norm="l2", use_idf=True, smooth_idf=True)
        transformer.fit(counts)
        return LexicalIndex(
            doc_ids=doc_ids,
            timestamps=timestamps,
            scheme=scheme,
            vocab=vocab,
            idf=np.asarray(transformer.idf_, dtype=np.float64),
            tfidf_rows=transformer.transform(counts).tocsr(),
            transformer=transformer,
        )

    lookup = vocab.word_to_id
    corpus = [[token for token in doc.tokens if token in lookup] for doc in pool]
    bm25 = BM25Okapi(corpus, k1=BM25_K1, b=BM25_B)
    bm25.idf = {word: max(value, 0.0) for word, value in bm25.idf.items()}
    idf = np.zeros(vocab.size, dtype=np.float64)
    for word, value in bm25.idf.items():
        idf[lookup[word]] = value
    return LexicalIndex(
        doc_ids=doc_ids,
        timestamps=timestamps,
        scheme=scheme,
        vocab=vocab,
        idf=idf,
        bm25=bm25,
    )


def _rank(index: LexicalIndex, scores: np.ndarray, eligible: np.ndarray) -> np.ndarray:
    """Row indices of eligible documents by (-score, doc id)."""
    rows = np.flatnonzero(eligible)
    ids = np.array([index.doc_ids[row] for row in rows])
    order = np.lexsort((ids, -scores[rows]))
    return rows[order]


def retrieve_topn(
    query: TimedDocument,
    index: LexicalIndex,
    n: int = DEFAULT_DEPTH,
    later_only: bool = False,
) -> list[PairedSample]:
    """Top-`n` pool documents for `query` by descending score.

    Args:
        query: Past document.
        index: Pool index.
        n: Maximum number of results.
        later_only: Restrict to pool documents timestamped after the query.

    Raises:
        InvalidInputError: If `n` < 1.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1.", {"n": n})
    scores = index.scores(query)
    eligible = (
        index.timestamps > query.timestamp
        if later_only
        else np.ones(len(index.doc_ids), dtype=bool)
    )
    ranked = _rank(index, scores, eligible)[:n]
    return [
        PairedSample(past=query.id, future=index.doc_ids[row], score=float(scores[row]))
        for row in ranked
    ]


def pair_training_set(
    train: Sequence[TimedDocument],
    adaptive_pool: Sequence[TimedDocument],
    n: int = DEFAULT_DEPTH,
    vocab: Vocabulary | None = None,
    scheme: Scheme = "tfidf",
    seed: int = 0,
    index: LexicalIndex | None = None,
) -> list[PairedSample]:
    """Pair every training document with its top-`n` later pool documents.

    Args:
        train: Past, labeled documents (queries).
        adaptive_pool: Future documents to retrieve from.
        n: Retrieval depth.
        vocab: Vocabulary for the index; required unless `index` is given.
        scheme: Scoring scheme when building the index here.
        seed: Seed for degenerate fallback pairing.
        index: Prebuilt index over `adaptive_pool`.

    Returns:
        list[PairedSample]: At most len(train) * n pairs, grouped by query in
        training order.

    Raises:
        InvalidInputError: If `train` is empty or no vocabulary is available.
        EmptyPoolError: If `adaptive_pool` is empty.
    """
    if not train:
        raise InvalidInputError("Training set is empty.")
    if index is None:
        if vocab is None:
            raise InvalidInputError("A vocabulary or a prebuilt index is required.")
        index = build_index(adaptive_pool, vocab, scheme)

    logger.info(
        "Pairing training set",
        extra={"train": len(train), "pool": len(index.doc_ids), "depth": n},
    )
    rng = np.random.default_rng(seed)
    pairs: list[PairedSample] = []
    degenerate = 0
    unpaired = 0
    for query in train:
        eligible = index.timestamps > query.timestamp
        if not eligible.any():
            unpaired += 1
            continue
        scores = index.scores(query)
        if np.all(scores[eligible] <= 0.0):
            rows = np.flatnonzero(eligible)
            picked = rng.choice(rows, size=min(n, rows.size), replace=False)
            picked = sorted(picked.tolist(), key=lambda row: index.doc_ids[row])
            pairs.extend(
                PairedSample(
                    past=query.id, future=index.doc_ids[row], score=0.0, degenerate=True
                )
                for row in picked
            )
            degenerate += 1
            continue
        ranked = _rank(index, scores, eligible)[:n]
        pairs.extend(
            PairedSample(past=query.id, future=index.doc_ids[row], score=float(scores[row]))
            for row in ranked
        )

    if degenerate:
        logger.warning("Degenerate pairings", extra={"queries": degenerate})
    if unpaired:
        logger.warning("Queries without later pool documents", extra={"queries": unpaired})
    logger.info("Pairing complete", extra={"pairs": len(pairs)})
    return pairs


_PAIR_HEADER = ["past_id", "future_id", "score", "degenerate"]


def write_pairs(pairs: Sequence[PairedSample], path: Path) -> None:
    """Write pairs as tab-separated records with a header row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(_PAIR_HEADER)
        for pair in pairs:
            writer.writerow([pair.past, pair.future, repr(pair.score), int(pair.degenerate)])


def read_pairs(path: Path) -> list[PairedSample]:
    """Read a pairs file written by `write_pairs`."""
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter="\t")
        return [
            PairedSample(
                past=row["past_id"],
                future=row["future_id"],
                score=float(row["score"]),
                degenerate=row["degenerate"] == "1",
            )
            for row in reader
        ]
