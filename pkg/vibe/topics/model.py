"""The disentangled topic model and its inference-time operations.

Semantics
---------
- Three encoders produce q(z^x|t^x), q(z^s|t^x,t^y) and q(z^y|t^y); two
  single-view approximators produce r^x(z^s|t^x) and r^y(z^s|t^y).
- Encoders read raw word counts; the shared encoder reads the concatenated
  pair of count vectors.
- Sampled latents become topic mixtures through a softmax, applied to each
  latent separately; the decoder for a side reads [mixture_variant;
  mixture_shared] and emits a distribution over the vocabulary.
- Every latent has a standard normal prior.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import softmax

from vibe.core.errors import InvalidInputError, ShapeMismatchError
from vibe.schemas.documents import Vocabulary
from vibe.text.bow import BowVector
from vibe.topics.gaussian import LatentGaussian
from vibe.topics.layers import Block, GaussianEncoder, TopicDecoder

Side = Literal["past", "future"]
LOG_EPS = 1e-10

NTM_BLOCKS = ("enc_x", "enc_y", "enc_s", "approx_x", "approx_y", "dec_x", "dec_y")


@dataclass(eq=False)
class VibeModel:
    """All topic-model parameters.

    Attributes:
        enc_x: Past encoder (BoW -> z^x).
        enc_y: Future encoder (BoW -> z^y).
        enc_s: Shared encoder (BoW pair -> z^s).
        approx_x: Past-side approximator of z^s.
        approx_y: Future-side approximator of z^s.
        dec_x: Past decoder ([z^x; z^s] -> words).
        dec_y: Future decoder ([z^y; z^s] -> words).
    """

    enc_x: GaussianEncoder
    enc_y: GaussianEncoder
    enc_s: GaussianEncoder
    approx_x: GaussianEncoder
    approx_y: GaussianEncoder
    dec_x: TopicDecoder
    dec_y: TopicDecoder

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        vocab_size: int,
        n_topics: int,
        hidden: int,
    ) -> VibeModel:
        """Initialise every block from `rng` in declaration order."""
        return cls(
            enc_x=GaussianEncoder.create(rng, vocab_size, hidden, n_topics),
            enc_y=GaussianEncoder.create(rng, vocab_size, hidden, n_topics),
            enc_s=GaussianEncoder.create(rng, 2 * vocab_size, hidden, n_topics),
            approx_x=GaussianEncoder.create(rng, vocab_size, hidden, n_topics),
            approx_y=GaussianEncoder.create(rng, vocab_size, hidden, n_topics),
            dec_x=TopicDecoder.create(rng, n_topics, vocab_size),
            dec_y=TopicDecoder.create(rng, n_topics, vocab_size),
        )

    @property
    def vocab_size(self) -> int:
        return int(self.dec_x.weight.shape[1])

    @property
    def n_topics(self) -> int:
        return int(self.enc_x.w_mean.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.enc_x.w_hidden.shape[1])

    def blocks(self) -> Iterator[tuple[str, Block]]:
        for name in NTM_BLOCKS:
            yield name, getattr(self, name)

    def parameters(self) -> dict[str, np.ndarray]:
        """Every tensor keyed `<block>.<name>`, in checkpoint order."""
        return {
            f"{prefix}.{name}": array
            for prefix, block in self.blocks()
            for name, array in block.params().items()
        }

    def encoder(self, side: Side) -> GaussianEncoder:
        return self.enc_x if side == "past" else self.enc_y

    def approximator(self, side: Side) -> GaussianEncoder:
        return self.approx_x if side == "past" else self.approx_y

    def decoder(self, side: Side) -> TopicDecoder:
        return self.dec_x if side == "past" else self.dec_y


def as_counts(bow: BowVector | np.ndarray, vocab_size: int) -> np.ndarray:
    """Dense float counts from a BowVector or an existing array.

    Raises:
        ShapeMismatchError: If an array's last axis is not `vocab_size` or a
            word id is outside the vocabulary.
    """
    if isinstance(bow, BowVector):
        if bow.counts and max(bow.counts) >= vocab_size:
            raise ShapeMismatchError(
                "BoW word id outside the vocabulary.",
                {"max_id": max(bow.counts), "vocab_size": vocab_size},
            )
        return bow.to_dense(vocab_size)
    counts = np.asarray(bow, dtype=np.float64)
    if counts.shape[-1] != vocab_size:
        raise ShapeMismatchError(
            "Count vector width must equal the vocabulary size.",
            {"width": counts.shape[-1], "vocab_size": vocab_size},
        )
    return counts


def encode_past(bow_x: BowVector | np.ndarray, model: VibeModel) -> LatentGaussian:
    """q(z^x | t^x)."""
    return model.enc_x.forward(as_counts(bow_x, model.vocab_size))[0]


def encode_future(bow_y: BowVector | np.ndarray, model: VibeModel) -> LatentGaussian:
    """q(z^y | t^y)."""
    return model.enc_y.forward(as_counts(bow_y, model.vocab_size))[0]


def encode_shared(
    bow_x: BowVector | np.ndarray,
    bow_y: BowVector | np.ndarray,
    model: VibeModel,
) -> LatentGaussian:
    """q(z^s | t^x, t^y) from the concatenated pair."""
    pair = np.concatenate(
        [as_counts(bow_x, model.vocab_size), as_counts(bow_y, model.vocab_size)], axis=-1
    )
    return model.enc_s.forward(pair)[0]


def approx_shared(bow: BowVector | np.ndarray, side: Side, model: VibeModel) -> LatentGaussian:
    """r^x(z^s | t^x) for the past side, r^y(z^s | t^y) for the future side."""
    return model.approximator(side).forward(as_counts(bow, model.vocab_size))[0]


def decode(
    z_variant: np.ndarray,
    z_shared: np.ndarray,
    side: Side,
    model: VibeModel,
) -> np.ndarray:
    """Word distribution p(t | z_variant, z_shared) for one side.

    Raises:
        ShapeMismatchError: If either latent is not K wide.
    """
    for name, z in (("z_variant", z_variant), ("z_shared", z_shared)):
        if np.shape(z)[-1] != model.n_topics:
            raise ShapeMismatchError(
                f"{name} must have K entries.", {"width": np.shape(z)[-1], "K": model.n_topics}
            )
    probs, _cache = model.decoder(side).forward(
        softmax(z_variant, axis=-1), softmax(z_shared, axis=-1)
    )
    return probs


def bow_log_likelihood(bow: BowVector | np.ndarray, probs: np.ndarray) -> float | np.ndarray:
    """sum_w count_w * ln(probs_w + 1e-10); one value per row for batches."""
    counts = as_counts(bow, probs.shape[-1])
    total = np.sum(counts * np.log(probs + LOG_EPS), axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def top_topic_words(
    model: VibeModel,
    vocab: Vocabulary,
    side: Side = "past",
    latent: Literal["variant", "shared"] = "shared",
    n: int = 10,
) -> list[list[tuple[str, float]]]:
    """Most probable words of every topic in one decoder block.

    A topic's word distribution is the softmax over the vocabulary of its
    decoder weight row; ties go to the lower word id.

    Raises:
        InvalidInputError: If `n` < 1.
        ShapeMismatchError: If `vocab` does not match the model.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1.", {"n": n})
    if vocab.size != model.vocab_size:
        raise ShapeMismatchError(
            "Vocabulary size does not match the model.",
            {"vocab": vocab.size, "model": model.vocab_size},
        )
    weight = model.decoder(side).weight
    k = model.n_topics
    rows = weight[:k] if latent == "variant" else weight[k:]
    topic_words = softmax(rows, axis=-1)
    word_ids = np.arange(model.vocab_size)
    result: list[list[tuple[str, float]]] = []
    for dist in topic_words:
        order = np.lexsort((word_ids, -dist))[:n]
        result.append([(vocab.words[idx], float(dist[idx])) for idx in order])
    return result
