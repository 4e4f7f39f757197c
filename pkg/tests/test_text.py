"""Unit tests for tokenization, stopwords and bag-of-words vectors.

Tests cover:
- Lowercasing, URL and mention removal, punctuation splitting
- The bundled stopword list
- BowVector validation, addition and dense/sparse stacking
"""

from __future__ import annotations

import numpy as np
import pytest

from vibe.text.bow import BowVector, bows_to_csr, bows_to_dense
from vibe.text.preprocess import load_stopwords, tokenize


class TestTokenize:
    """Tests for the tokenizer."""

    def test_strips_urls_mentions_and_punctuation(self):
        """URLs and mentions vanish and hashtags keep their word."""
        assert tokenize("Wear a MASK! https://t.co/x @cdc #covid19") == [
            "wear",
            "a",
            "mask",
            "covid19",
        ]

    def test_empty_text_has_no_tokens(self):
        """Empty or punctuation-only text yields no tokens."""
        assert tokenize("") == []
        assert tokenize("!!! ... ???") == []

    def test_apostrophes_split_words(self):
        """Non-alphanumerics separate tokens."""
        assert tokenize("don't") == ["don", "t"]

    def test_www_links_are_removed(self):
        """Bare www links are treated as URLs."""
        assert tokenize("see www.example.org now") == ["see", "now"]


class TestStopwords:
    """Tests for the bundled stopword list."""

    def test_common_function_words_present(self):
        """Articles and copulas are stopwords."""
        stopwords = load_stopwords()
        assert {"a", "the", "is"} <= stopwords

    def test_content_words_absent(self):
        """Topic words survive stopword removal."""
        assert "vaccine" not in load_stopwords()


class TestBowVector:
    """Tests for sparse bag-of-words vectors."""

    def test_rejects_non_positive_counts(self):
        """Zero or negative counts are invalid."""
        with pytest.raises(ValueError):
            BowVector({0: 0})
        with pytest.raises(ValueError):
            BowVector({1: -2})

    def test_addition_merges_counts(self):
        """Adding vectors sums counts per word id."""
        merged = BowVector({0: 1, 2: 3}) + BowVector({2: 1, 4: 5})
        assert merged.counts == {0: 1, 2: 4, 4: 5}
        assert merged.total == 10

    def test_to_dense(self):
        """Dense form places counts at their ids."""
        dense = BowVector({1: 2, 3: 1}).to_dense(5)
        np.testing.assert_array_equal(dense, [0.0, 2.0, 0.0, 1.0, 0.0])

    def test_stacking_matches_dense_rows(self):
        """CSR and dense stacks agree row by row."""
        bows = [BowVector({0: 1}), BowVector(), BowVector({2: 3, 1: 1})]
        csr = bows_to_csr(bows, 3)
        assert csr.shape == (3, 3)
        np.testing.assert_array_equal(
            bows_to_dense(bows, 3), [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 3.0]]
        )
