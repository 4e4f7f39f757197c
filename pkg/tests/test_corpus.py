"""Unit tests for dataset loading, vocabularies, splits and encodings."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from vibe.core.errors import BadBoundariesError, EmptyVocabularyError, InvalidInputError
from vibe.schemas.documents import DatasetRecord, LabelMap, TimedDocument, Vocabulary
from vibe.services.corpus import (
    build_vocabulary,
    encode_documents,
    load_label_map,
    load_split,
    read_dataset,
    records_to_documents,
    save_label_map,
    save_split,
    temporal_split,
    to_bow,
    trainable,
    vocab_overlap,
    write_dataset,
)


def _docs(n: int) -> list[TimedDocument]:
    return [
        TimedDocument(id=f"d{i:04d}", tokens=("word",), timestamp=100 + i, label=0)
        for i in range(n)
    ]


class TestRecords:
    """Tests for dataset records and label mapping."""

    def test_labels_get_first_seen_ids(self):
        """Label strings map to ids in first-seen order."""
        records = [
            DatasetRecord(id="a", text="x", timestamp=1, label="neg"),
            DatasetRecord(id="b", text="y", timestamp=2, label="pos"),
            DatasetRecord(id="c", text="z", timestamp=3, label="neg"),
            DatasetRecord(id="d", text="w", timestamp=4),
        ]
        docs, label_map = records_to_documents(records)

        assert label_map.labels == ["neg", "pos"]
        assert [doc.label for doc in docs] == [0, 1, 0, None]

    def test_existing_label_map_is_extended(self):
        """A saved label map keeps its ids; new labels are appended."""
        records = [DatasetRecord(id="a", text="x", timestamp=1, label="new")]
        _docs_out, label_map = records_to_documents(records, LabelMap(labels=["old"]))
        assert label_map.labels == ["old", "new"]

    def test_label_map_file_round_trip(self, tmp_path: Path):
        """Saved label maps keep their class-id order."""
        path = tmp_path / "labels.json"
        save_label_map(LabelMap(labels=["neg", "pos"]), path)
        assert load_label_map(path).labels == ["neg", "pos"]

    def test_iso_timestamps_are_parsed(self):
        """ISO-8601 timestamps become epoch seconds."""
        record = DatasetRecord(id="a", text="x", timestamp="1970-01-01T00:01:00Z")
        assert record.timestamp == 60

    def test_dataset_file_round_trip(self, tmp_path: Path):
        """Written datasets read back as the same documents."""
        path = tmp_path / "data.jsonl"
        records = [
            DatasetRecord(id="a", text="Masks work", timestamp=5, label="pos"),
            DatasetRecord(id="b", text="no masks", timestamp=6, label="neg"),
        ]
        assert write_dataset(records, path) == 2

        docs, label_map = read_dataset(path)

        assert [doc.tokens for doc in docs] == [("masks", "work"), ("no", "masks")]
        assert label_map.labels == ["pos", "neg"]

    def test_invalid_line_reports_line_number(self, tmp_path: Path):
        """Malformed records raise with their line number."""
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "text": "x", "timestamp": 1}\n{"id": "b"}\n')

        with pytest.raises(InvalidInputError) as excinfo:
            read_dataset(path)

        assert excinfo.value.details["line"] == 2


class TestVocabulary:
    """Tests for vocabulary construction and BoW conversion."""

    def test_ids_follow_frequency_then_word(self, toy_docs):
        """The most frequent word gets id 0; ties are lexicographic."""
        vocab = build_vocabulary(toy_docs)
        assert vocab.words[:4] == ("covid", "news", "lockdown", "vaccine")
        assert vocab.size == 8

    def test_max_size_caps_vocabulary(self, toy_docs):
        """Only the top max_size words are kept."""
        assert build_vocabulary(toy_docs, max_size=2).words == ("covid", "news")

    def test_stopwords_only_corpus_is_empty(self):
        """A corpus of stopwords has no vocabulary."""
        docs = [TimedDocument(id="a", tokens=("the", "a", "is"), timestamp=1)]
        with pytest.raises(EmptyVocabularyError):
            build_vocabulary(docs)

    def test_to_bow_drops_unknown_tokens(self):
        """Out-of-vocabulary tokens do not count."""
        vocab = Vocabulary(words=("mask", "vaccine"))
        doc = TimedDocument(id="a", tokens=("mask", "mask", "zebra", "vaccine"), timestamp=1)
        assert to_bow(doc, vocab).counts == {0: 2, 1: 1}

    def test_duplicate_words_are_rejected(self):
        """Vocabularies are bijective."""
        with pytest.raises(ValueError):
            Vocabulary(words=("a", "a"))

    def test_trainable_drops_empty_documents(self):
        """Documents without in-vocabulary tokens are dropped."""
        vocab = Vocabulary(words=("mask",))
        docs = [
            TimedDocument(id="a", tokens=("mask",), timestamp=1),
            TimedDocument(id="b", tokens=("zebra",), timestamp=2),
        ]
        assert [doc.id for doc in trainable(docs, vocab)] == ["a"]


class TestTemporalSplit:
    """Tests for relative and absolute temporal splits."""

    @pytest.mark.parametrize(
        ("n", "sizes"),
        [(1000, (500, 50, 150, 300)), (20, (10, 1, 3, 6))],
    )
    def test_relative_sizes(self, n, sizes):
        """Relative mode uses 50/5/15/30 percent segments."""
        split = temporal_split(_docs(n), seed=0)
        got = (len(split.train), len(split.validation), len(split.golden_adaptive), len(split.test))
        assert got == sizes

    def test_relative_roles_are_time_ordered_and_disjoint(self):
        """Train precedes the middle segment, which precedes test."""
        docs = _docs(40)
        stamps = {doc.id: doc.timestamp for doc in docs}
        split = temporal_split(docs, seed=1)
        middle = split.validation + split.golden_adaptive

        assert max(stamps[i] for i in split.train) < min(stamps[i] for i in middle)
        assert max(stamps[i] for i in middle) < min(stamps[i] for i in split.test)
        assert len(set(split.train) | set(middle) | set(split.test)) == 40
        assert split.boundaries == [stamps[split.train[-1]] + 1, stamps[split.test[0]]]

    def test_relative_needs_twenty_documents(self):
        """Fewer than twenty documents cannot be split relatively."""
        with pytest.raises(InvalidInputError):
            temporal_split(_docs(19))

    def test_validation_sample_is_seeded(self):
        """The same seed picks the same validation documents."""
        docs = _docs(100)
        assert temporal_split(docs, seed=7) == temporal_split(docs, seed=7)

    def test_absolute_cut_points(self):
        """Absolute mode assigns by timestamp and samples a quarter for validation."""
        split = temporal_split(_docs(40), mode="absolute", cut_points=[110, 130])

        assert len(split.train) == 10
        assert len(split.validation) == 5
        assert len(split.golden_adaptive) == 15
        assert len(split.test) == 10

    def test_absolute_upper_bound_excludes_late_documents(self):
        """A third cut point bounds the test segment."""
        split = temporal_split(_docs(40), mode="absolute", cut_points=[110, 130, 135])
        assert len(split.test) == 5

    @pytest.mark.parametrize("cuts", [None, [10], [130, 110], [1, 2, 3, 4]])
    def test_bad_boundaries(self, cuts):
        """Missing, single, decreasing or too many cut points are rejected."""
        with pytest.raises(BadBoundariesError):
            temporal_split(_docs(40), mode="absolute", cut_points=cuts)

    def test_split_file_round_trip(self, tmp_path: Path):
        """Saved splits load back unchanged."""
        split = temporal_split(_docs(40), seed=2)
        save_split(split, tmp_path / "split.json")
        assert load_split(tmp_path / "split.json") == split


class TestVocabOverlap:
    """Tests for top-k vocabulary overlap."""

    def test_identical_sets_overlap_fully(self, toy_docs):
        """A set overlaps itself by 100 percent."""
        assert vocab_overlap(toy_docs, toy_docs, k=5) == 100.0

    def test_partial_overlap(self):
        """Shared top-k words over the smaller top-k set."""
        a = [TimedDocument(id="a", tokens=("mask", "vaccine"), timestamp=1)]
        b = [TimedDocument(id="b", tokens=("mask", "lockdown"), timestamp=2)]
        assert vocab_overlap(a, b, k=2) == 50.0

    def test_empty_side_gives_zero(self):
        """No words on one side means no overlap."""
        a = [TimedDocument(id="a", tokens=("mask",), timestamp=1)]
        assert vocab_overlap(a, [], k=3) == 0.0

    def test_k_must_be_positive(self, toy_docs):
        """k below one is invalid."""
        with pytest.raises(InvalidInputError):
            vocab_overlap(toy_docs, toy_docs, k=0)


class TestEncodedDocs:
    """Tests for array encodings of documents."""

    def test_encoding_aligns_rows(self, toy_docs):
        """Counts, timestamps and labels share row order."""
        vocab = build_vocabulary(toy_docs)
        encoded = encode_documents(toy_docs[:3], vocab)

        assert encoded.ids == ("d000", "d001", "d002")
        assert encoded.counts.shape == (3, vocab.size)
        np.testing.assert_array_equal(encoded.counts.sum(axis=1), [4.0, 4.0, 4.0])
        np.testing.assert_array_equal(encoded.labels, [0, 1, 0])
        assert encoded.labeled

    def test_take_and_without_labels(self, toy_docs):
        """Row selection keeps alignment; unlabeled copies use -1."""
        encoded = encode_documents(toy_docs[:4], build_vocabulary(toy_docs))
        picked = encoded.take([3, 1])

        assert picked.ids == ("d003", "d001")
        assert picked.row_of() == {"d003": 0, "d001": 1}
        unlabeled = picked.without_labels()
        np.testing.assert_array_equal(unlabeled.labels, [-1, -1])
        assert not unlabeled.labeled
