"""Unit tests for the topic model, its building blocks and the optimizer.

Tests cover:
- Encoders, approximators and decoders on single vectors and batches
- Count validation and BoW log-likelihood
- Topic word listings
- Parameter partitions of the full state
- Embedding bags and precomputed embeddings
- Adam updates
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from vibe.core.errors import InvalidInputError, ShapeMismatchError
from vibe.schemas.documents import Vocabulary
from vibe.text.bow import BowVector
from vibe.topics.embedding import bag_weights, read_precomputed, write_precomputed
from vibe.topics.layers import cross_entropy
from vibe.topics.model import (
    NTM_BLOCKS,
    approx_shared,
    as_counts,
    bow_log_likelihood,
    decode,
    encode_future,
    encode_past,
    encode_shared,
    top_topic_words,
)
from vibe.topics.optim import Adam
from vibe.topics.state import STAGE1_BLOCKS, STAGE2_HEADS


class TestEncoders:
    """Tests for the inference networks."""

    def test_bow_and_dense_inputs_agree(self, tiny_state):
        """A BowVector and its dense counts encode identically."""
        bow = BowVector({0: 2, 5: 1})
        from_bow = encode_past(bow, tiny_state.model)
        from_dense = encode_past(bow.to_dense(12), tiny_state.model)
        np.testing.assert_array_equal(from_bow.mean, from_dense.mean)
        assert from_bow.dim == 3

    def test_batches_encode_row_by_row(self, tiny_state, tiny_counts):
        """Batch encoding matches encoding each row alone."""
        batch = encode_future(tiny_counts, tiny_state.model)
        single = encode_future(tiny_counts[2], tiny_state.model)
        np.testing.assert_allclose(batch.mean[2], single.mean)
        np.testing.assert_allclose(batch.log_std[2], single.log_std)

    def test_log_std_is_clamped(self, tiny_state):
        """Huge inputs cannot push log_std past its bounds."""
        counts = np.full(12, 1e6)
        for g in (
            encode_past(counts, tiny_state.model),
            encode_shared(counts, counts, tiny_state.model),
            approx_shared(counts, "future", tiny_state.model),
        ):
            assert np.all(np.abs(g.log_std) <= 8.0)

    def test_shared_encoder_reads_both_sides(self, tiny_state, tiny_counts):
        """Changing either side changes q(z^s)."""
        base = encode_shared(tiny_counts[0], tiny_counts[1], tiny_state.model)
        other = encode_shared(tiny_counts[0], tiny_counts[2], tiny_state.model)
        assert not np.allclose(base.mean, other.mean)

    def test_approximators_differ_by_side(self, tiny_state, tiny_counts):
        """r^x and r^y are separate networks."""
        past = approx_shared(tiny_counts[0], "past", tiny_state.model)
        future = approx_shared(tiny_counts[0], "future", tiny_state.model)
        assert not np.allclose(past.mean, future.mean)

    def test_width_mismatch(self, tiny_state):
        """Count vectors must be V wide."""
        with pytest.raises(ShapeMismatchError):
            encode_past(np.ones(11), tiny_state.model)

    def test_bow_id_outside_vocabulary(self):
        """BoW ids must be below V."""
        with pytest.raises(ShapeMismatchError):
            as_counts(BowVector({12: 1}), 12)


class TestDecoder:
    """Tests for word distributions and likelihoods."""

    def test_decode_is_a_distribution(self, tiny_state, rng):
        """Decoded word probabilities are positive and sum to one."""
        probs = decode(rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), "past", tiny_state.model)
        assert probs.shape == (4, 12)
        assert np.all(probs > 0.0)
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(4))

    def test_decode_checks_latent_width(self, tiny_state):
        """Latents must be K wide."""
        with pytest.raises(ShapeMismatchError):
            decode(np.zeros(4), np.zeros(3), "future", tiny_state.model)

    def test_log_likelihood_of_uniform_distribution(self):
        """sum counts * ln(p + 1e-10) for a uniform distribution."""
        value = bow_log_likelihood(BowVector({0: 2, 3: 1}), np.full(4, 0.25))
        assert value == pytest.approx(3 * np.log(0.25 + 1e-10))

    def test_log_likelihood_per_row(self):
        """Batches give one value per row."""
        values = bow_log_likelihood(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([0.5, 0.5]))
        np.testing.assert_allclose(values, [np.log(0.5 + 1e-10), 2 * np.log(0.5 + 1e-10)])


class TestTopTopicWords:
    """Tests for topic word listings."""

    def test_lists_every_topic_in_probability_order(self, tiny_state):
        """One list per topic with non-increasing probabilities."""
        vocab = Vocabulary(words=tuple(f"w{i}" for i in range(12)))
        topics = top_topic_words(tiny_state.model, vocab, side="past", latent="shared", n=5)

        assert len(topics) == 3
        for words in topics:
            probs = [prob for _word, prob in words]
            assert len(words) == 5
            assert probs == sorted(probs, reverse=True)

    def test_vocabulary_must_match(self, tiny_state):
        """A vocabulary of another size is rejected."""
        with pytest.raises(ShapeMismatchError):
            top_topic_words(tiny_state.model, Vocabulary(words=("a",)))

    def test_n_must_be_positive(self, tiny_state):
        """n below one is invalid."""
        vocab = Vocabulary(words=tuple(f"w{i}" for i in range(12)))
        with pytest.raises(InvalidInputError):
            top_topic_words(tiny_state.model, vocab, n=0)


class TestModelState:
    """Tests for the full state and its parameter partitions."""

    def test_dims(self, tiny_state):
        """dims reports (V, K, hidden, C, T, E)."""
        assert tiny_state.dims == (12, 3, 8, 2, 2, 4)

    def test_parameter_keys_are_prefixed(self, tiny_state):
        """Keys read `<block>.<name>`."""
        keys = tiny_state.parameters()
        assert "enc_s.w_hidden" in keys
        assert keys["enc_s.w_hidden"].shape == (24, 8)
        assert keys["task2.w_mlp"].shape == (4 + 12, 8)
        assert keys["task1.w_mlp"].shape == (4 + 3, 8)

    def test_partitions(self, tiny_state):
        """Stage partitions select the expected blocks."""
        stage1 = tiny_state.parameters(STAGE1_BLOCKS)
        heads = tiny_state.parameters(STAGE2_HEADS)
        assert {key.split(".")[0] for key in stage1} == {*NTM_BLOCKS, "embed", "task1"}
        assert {key.split(".")[0] for key in heads} == {"task2", "time2"}
        assert set(stage1).isdisjoint(heads)

    def test_copy_is_independent(self, tiny_state):
        """Mutating a copy leaves the original untouched."""
        clone = tiny_state.copy()
        clone.parameters()["dec_x.weight"][...] = 0.0
        assert np.any(tiny_state.parameters()["dec_x.weight"] != 0.0)

    def test_is_finite(self, tiny_state):
        """A NaN anywhere makes the state non-finite."""
        assert tiny_state.is_finite()
        tiny_state.parameters()["time2.b_out"][0] = np.nan
        assert not tiny_state.is_finite()


class TestEmbeddings:
    """Tests for document embeddings."""

    def test_bag_weights_normalise_rows(self):
        """Rows sum to one and empty rows stay zero."""
        weights = bag_weights(np.array([[1.0, 3.0], [0.0, 0.0]]))
        np.testing.assert_allclose(weights, [[0.25, 0.75], [0.0, 0.0]])

    def test_embedding_is_weighted_mean(self, tiny_state):
        """A single-word document embeds as that word's vector."""
        counts = np.zeros((1, 12))
        counts[0, 4] = 3.0
        embedded = tiny_state.provider.embed(counts)
        np.testing.assert_allclose(embedded[0], tiny_state.provider.word_embeddings[4])

    def test_precomputed_lookup(self, tiny_state):
        """Precomputed vectors replace the bag and freeze the word vectors."""
        tiny_state.provider.precomputed = {"a": np.ones(4), "b": np.zeros(4)}
        embedded = tiny_state.provider.embed(np.zeros((2, 12)), ["b", "a"])

        np.testing.assert_array_equal(embedded, [np.zeros(4), np.ones(4)])
        grads = tiny_state.provider.backward(np.ones((2, 12)), np.ones((2, 4)))
        assert not np.any(grads["word_embeddings"])

    def test_missing_precomputed_document(self, tiny_state):
        """Unknown ids are reported."""
        tiny_state.provider.precomputed = {"a": np.ones(4)}
        with pytest.raises(InvalidInputError):
            tiny_state.provider.embed(np.zeros((1, 12)), ["zzz"])

    def test_precomputed_needs_document_ids(self, tiny_state):
        """Precomputed vectors never fall back to the word bag."""
        tiny_state.provider.precomputed = {"a": np.ones(4)}
        with pytest.raises(InvalidInputError):
            tiny_state.provider.embed(np.ones((1, 12)))

    def test_precomputed_single_vector_keeps_its_rank(self, tiny_state):
        """A (V,) count vector with one id embeds as (E,)."""
        tiny_state.provider.precomputed = {"a": np.arange(4.0)}
        embedded = tiny_state.provider.embed(np.zeros(12), ["a"])
        assert embedded.shape == (4,)
        np.testing.assert_array_equal(embedded, np.arange(4.0))

    def test_precomputed_ids_must_match_rows(self, tiny_state):
        """One id per count row."""
        tiny_state.provider.precomputed = {"a": np.ones(4), "b": np.zeros(4)}
        with pytest.raises(ShapeMismatchError):
            tiny_state.provider.embed(np.zeros((3, 12)), ["a", "b"])

    def test_precomputed_file_round_trip(self, tmp_path: Path):
        """Written tables read back exactly."""
        table = {"a": np.array([0.1, -2.5]), "b": np.array([3.0, 1e-9])}
        write_precomputed(table, tmp_path / "emb.tsv")
        loaded = read_precomputed(tmp_path / "emb.tsv", embed_dim=2)
        np.testing.assert_array_equal(loaded["b"], table["b"])

    def test_precomputed_width_mismatch(self, tmp_path: Path):
        """Rows of the wrong width are rejected."""
        path = tmp_path / "emb.tsv"
        path.write_text("a\t1.0\t2.0\nb\t1.0\n")
        with pytest.raises(ShapeMismatchError):
            read_precomputed(path)


class TestLayers:
    """Tests for shared layer helpers."""

    def test_cross_entropy_gradient(self):
        """The gradient is (softmax - onehot) / B."""
        logits = np.array([[0.0, 0.0], [np.log(3.0), 0.0]])
        loss, d_logits = cross_entropy(logits, np.array([0, 1]))

        assert loss == pytest.approx(-0.5 * (np.log(0.5) + np.log(0.25)))
        np.testing.assert_allclose(d_logits, [[-0.25, 0.25], [0.375, -0.375]])

    def test_cross_entropy_is_finite_for_extreme_logits(self):
        """A confidently wrong head gives the exact large loss, not a clipped one."""
        logits = np.array([[800.0, -800.0]])
        loss, d_logits = cross_entropy(logits, np.array([1]))

        assert loss == pytest.approx(1600.0)
        np.testing.assert_allclose(d_logits, [[1.0, -1.0]])


class TestAdam:
    """Tests for the in-place Adam optimizer."""

    def test_first_step_moves_by_learning_rate(self):
        """Bias correction makes the first step lr * sign(grad)."""
        params = {"w": np.array([1.0, -1.0])}
        Adam(learning_rate=0.1).step(params, {"w": np.array([2.0, -0.5])})
        np.testing.assert_allclose(params["w"], [0.9, -0.9], atol=1e-6)

    def test_zero_learning_rate_changes_nothing(self):
        """lr = 0 leaves parameters unchanged."""
        params = {"w": np.array([1.0, 2.0])}
        Adam(learning_rate=0.0).step(params, {"w": np.array([5.0, 5.0])})
        np.testing.assert_array_equal(params["w"], [1.0, 2.0])

    def test_only_parameters_with_gradients_move(self):
        """Parameters missing from the gradients stay frozen."""
        params = {"a": np.array([1.0]), "b": np.array([1.0])}
        Adam(learning_rate=0.1).step(params, {"a": np.array([1.0])})
        assert params["b"][0] == 1.0
        assert params["a"][0] < 1.0
