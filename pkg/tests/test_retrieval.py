"""Unit tests for lexical retrieval and training-pair construction.

Tests cover:
- tf-idf and BM25 ranking
- Tie-breaking by document id and the later-only filter
- Degenerate fallback pairing and skipped queries
- Hand-computed tf-idf weights, cosines and BM25 scores
- Pair file persistence
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from vibe.core.errors import EmptyPoolError, InvalidInputError
from vibe.schemas.documents import TimedDocument, Vocabulary
from vibe.services.retrieval import (
    build_index,
    pair_training_set,
    read_pairs,
    retrieve_topn,
    write_pairs,
)

VOCAB = Vocabulary(words=("mask", "vaccine", "lockdown", "school"))


def _doc(doc_id: str, tokens: tuple[str, ...], timestamp: int) -> TimedDocument:
    return TimedDocument(id=doc_id, tokens=tokens, timestamp=timestamp, label=0)


def _pool() -> list[TimedDocument]:
    return [
        _doc("f0", ("mask", "vaccine"), 5),
        _doc("f1", ("mask", "vaccine"), 100),
        _doc("f2", ("mask", "school"), 110),
        _doc("f3", ("lockdown", "school"), 120),
    ]


QUERY = _doc("q", ("mask", "vaccine"), 50)


class TestRetrieveTopN:
    """Tests for single-query retrieval."""

    def test_ties_break_by_document_id(self):
        """Identical documents tie and the smaller id wins."""
        hits = retrieve_topn(QUERY, build_index(_pool(), VOCAB), n=1)
        assert [hit.future for hit in hits] == ["f0"]
        assert hits[0].score == pytest.approx(1.0)

    def test_later_only_filters_earlier_documents(self):
        """Only documents after the query are eligible when asked."""
        hits = retrieve_topn(QUERY, build_index(_pool(), VOCAB), n=4, later_only=True)
        assert [hit.future for hit in hits] == ["f1", "f2", "f3"]

    def test_shorter_results_are_prefixes(self):
        """Top-n lists grow by appending."""
        index = build_index(_pool(), VOCAB)
        short = retrieve_topn(QUERY, index, n=2)
        long = retrieve_topn(QUERY, index, n=4)
        assert long[:2] == short

    def test_scores_are_non_increasing(self):
        """Results are sorted by descending score."""
        hits = retrieve_topn(QUERY, build_index(_pool(), VOCAB), n=4)
        scores = [hit.score for hit in hits]
        assert scores == sorted(scores, reverse=True)

    def test_n_must_be_positive(self):
        """Depth below one is invalid."""
        with pytest.raises(InvalidInputError):
            retrieve_topn(QUERY, build_index(_pool(), VOCAB), n=0)

    def test_empty_pool_is_rejected(self):
        """An index needs at least one document."""
        with pytest.raises(EmptyPoolError):
            build_index([], VOCAB)


class TestBm25:
    """Tests for the BM25 scoring scheme."""

    def _index(self):
        pool = [
            _doc("f1", ("vaccine", "mask"), 10),
            _doc("f2", ("school", "mask"), 11),
            _doc("f3", ("lockdown", "school"), 12),
            _doc("f4", ("lockdown", "mask"), 13),
            _doc("f5", ("school", "lockdown"), 14),
        ]
        return build_index(pool, VOCAB, scheme="bm25")

    def test_rare_term_ranks_its_document_first(self):
        """The only document holding the query term ranks first."""
        query = _doc("q", ("vaccine",), 0)
        hits = retrieve_topn(query, self._index(), n=2)
        assert hits[0].future == "f1"
        assert hits[0].score > hits[1].score

    def test_idf_is_floored_at_zero(self):
        """No term weight is negative."""
        assert np.all(self._index().idf >= 0.0)

    def test_out_of_vocabulary_query_scores_zero(self):
        """Queries without known tokens score zero everywhere."""
        index = self._index()
        np.testing.assert_array_equal(index.scores(_doc("q", ("zebra",), 0)), np.zeros(5))


class TestPairTrainingSet:
    """Tests for pairing training documents with later pool documents."""

    def test_pairs_follow_ranking_and_time(self):
        """Each query takes its top-n later documents."""
        pairs = pair_training_set([QUERY], _pool(), n=2, vocab=VOCAB)
        assert [(pair.past, pair.future) for pair in pairs] == [("q", "f1"), ("q", "f2")]
        assert not any(pair.degenerate for pair in pairs)

    def test_queries_without_later_documents_are_skipped(self):
        """Queries after the whole pool contribute no pairs."""
        late = _doc("late", ("mask",), 500)
        pairs = pair_training_set([late, QUERY], _pool(), n=1, vocab=VOCAB)
        assert [pair.past for pair in pairs] == ["q"]

    def test_zero_score_queries_pair_randomly(self):
        """Queries scoring zero everywhere get flagged seeded-random pairs."""
        query = _doc("oov", ("zebra",), 60)
        pairs = pair_training_set([query], _pool(), n=2, vocab=VOCAB, seed=4)

        assert len(pairs) == 2
        assert all(pair.degenerate and pair.score == 0.0 for pair in pairs)
        assert {pair.future for pair in pairs} <= {"f1", "f2", "f3"}
        assert pairs == pair_training_set([query], _pool(), n=2, vocab=VOCAB, seed=4)

    def test_future_documents_may_repeat_across_queries(self):
        """There is no global deduplication of futures."""
        second = _doc("q2", ("mask", "vaccine"), 60)
        pairs = pair_training_set([QUERY, second], _pool(), n=1, vocab=VOCAB)
        assert [pair.future for pair in pairs] == ["f1", "f1"]

    def test_requires_training_documents(self):
        """An empty training set is rejected."""
        with pytest.raises(InvalidInputError):
            pair_training_set([], _pool(), vocab=VOCAB)

    def test_pairs_file_round_trip(self, tmp_path: Path):
        """Pairs read back with their scores and flags."""
        pairs = pair_training_set([QUERY], _pool(), n=3, vocab=VOCAB)
        write_pairs(pairs, tmp_path / "pairs.tsv")
        assert read_pairs(tmp_path / "pairs.tsv") == pairs


SMOOTH_IDF = 1.0 + np.log(2.0)


def _toy_pool() -> list[TimedDocument]:
    return [
        _doc("p1", ("mask", "vaccine"), 10),
        _doc("p2", ("mask", "school"), 11),
        _doc("p3", ("mask", "lockdown"), 12),
    ]


class TestTfidfWeights:
    """Hand-computed smooth-idf weights and cosine rankings on three documents."""

    def test_idf_matches_smoothed_formula(self):
        """idf = ln((1 + n) / (1 + df)) + 1 with n = 3."""
        index = build_index(_toy_pool(), VOCAB)
        expected = [1.0, SMOOTH_IDF, SMOOTH_IDF, SMOOTH_IDF]
        np.testing.assert_allclose(index.idf, expected)

    def test_rows_are_l2_normalised_weights(self):
        """Each row is its idf-weighted counts over their L2 norm."""
        index = build_index(_toy_pool(), VOCAB)
        norm = np.sqrt(1.0 + SMOOTH_IDF**2)
        np.testing.assert_allclose(
            index.tfidf_rows.toarray()[0], [1.0 / norm, SMOOTH_IDF / norm, 0.0, 0.0]
        )

    @pytest.mark.parametrize(
        ("tokens", "ranking"),
        [
            (("mask", "vaccine"), ["p1", "p2", "p3"]),
            (("mask", "school"), ["p2", "p1", "p3"]),
            (("lockdown",), ["p3", "p1", "p2"]),
        ],
    )
    def test_three_by_three_cosine_ranking(self, tokens, ranking):
        """Cosines rank the pool; equal cosines fall back to the smaller id."""
        hits = retrieve_topn(_doc("q", tokens, 0), build_index(_toy_pool(), VOCAB), n=3)
        assert [hit.future for hit in hits] == ranking

    def test_cosine_values(self):
        """A shared word alone gives 1 / (1 + idf^2) against a non-identical row."""
        hits = retrieve_topn(_doc("q", ("mask", "vaccine"), 0), build_index(_toy_pool(), VOCAB), n=3)
        overlap = 1.0 / (1.0 + SMOOTH_IDF**2)
        assert [hit.score for hit in hits] == pytest.approx([1.0, overlap, overlap])


class TestBm25Scores:
    """Hand-computed BM25 scores with k1 = 1.2 and b = 0.75."""

    def _index(self):
        pool = [
            _doc("p1", ("mask", "school"), 10),
            _doc("p2", ("vaccine", "vaccine", "lockdown"), 11),
            _doc("p3", ("school",), 12),
        ]
        return build_index(pool, VOCAB, scheme="bm25")

    def test_idf_replaces_negative_values(self):
        """Terms in most documents get a quarter of the mean idf."""
        rare = np.log(2.5 / 1.5)
        np.testing.assert_allclose(self._index().idf, [rare, rare, rare, rare / 8.0])

    def test_term_frequency_and_length_saturation(self):
        """Scores sum idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))."""
        rare = np.log(2.5 / 1.5)
        length_norm = 1.2 * (0.25 + 0.75 * 3 / 2)
        expected = rare * (2 * 2.2 / (2 + length_norm) + 2.2 / (1 + length_norm))
        scores = self._index().scores(_doc("q", ("vaccine", "lockdown"), 0))
        np.testing.assert_allclose(scores, [0.0, expected, 0.0])

    def test_shorter_documents_score_higher(self):
        """The same single occurrence weighs more in a shorter document."""
        school = np.log(2.5 / 1.5) / 8.0
        scores = self._index().scores(_doc("q", ("school",), 0))
        np.testing.assert_allclose(scores, [school, 0.0, school * 2.2 / (1 + 1.2 * 0.625)])


def test_five_queries_at_depth_ten_give_fifty_pairs():
    """Every query with a large enough later pool contributes exactly n pairs."""
    train = [_doc(f"t{i}", ("mask",), i) for i in range(5)]
    pool = [
        _doc(f"p{i:03d}", ("mask", "vaccine" if i % 2 else "school"), 100 + i)
        for i in range(100)
    ]
    pairs = pair_training_set(train, pool, n=10, vocab=VOCAB)

    assert len(pairs) == 50
    assert not any(pair.degenerate for pair in pairs)
    for query in train:
        futures = [pair.future for pair in pairs if pair.past == query.id]
        assert futures == [f"p{i:03d}" for i in range(10)]
