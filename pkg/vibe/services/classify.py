"""Task classification on top of the topic model.

Semantics
---------
- Stage 1 feeds [embedding; mean of r^x(z^s|t^x)] to the stage-1 task head.
  Its joint loss is mean cross-entropy on past labels plus mu times the
  negated regularized topic objective.
- Pseudo-labels are the stage-1 argmax (lowest class id on ties) with the
  maximum probability as confidence; nothing is filtered.
- Unpaired documents use single-view inference: the side's own encoder mean
  for the variant latent and the side's approximator mean for z^s, decoded
  without sampling.
- Sphere features are L2-normalised [embedding; reconstructed BoW]; a zero
  vector maps to the first basis vector.
- Stage 2 trains a task head and a time head on sphere features; final
  predictions read the task head on the future-side projection.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.special import softmax

from vibe.core.errors import InvalidInputError, ShapeMismatchError
from vibe.schemas.documents import PseudoLabeledDoc
from vibe.services.corpus import EncodedDocs
from vibe.services.evaluation import write_csv
from vibe.text.bow import BowVector
from vibe.topics.embedding import EmbeddingProvider
from vibe.topics.layers import (
    DecoderCache,
    EncoderCache,
    Grads,
    cross_entropy,
    softmax_backward,
)
from vibe.topics.model import Side, VibeModel, as_counts
from vibe.topics.objective import LossBreakdown, NoiseDraws, PairBatch, vibe_objective
from vibe.topics.objective import backward as objective_backward
from vibe.topics.state import ModelState

logger = logging.getLogger(__name__)

Variant = Literal["vibe", "ib_ntm", "vanilla_ntm"]


def _prefixed(prefix: str, grads: Grads) -> Grads:
    return {f"{prefix}.{name}": value for name, value in grads.items()}


def _merge(total: Grads, part: Grads) -> None:
    for name, value in part.items():
        if name in total:
            total[name] = total[name] + value
        else:
            total[name] = value


def _side_suffix(side: Side) -> str:
    return "x" if side == "past" else "y"


def embed(
    bow: BowVector | np.ndarray,
    provider: EmbeddingProvider,
    doc_ids: Sequence[str] | None = None,
) -> np.ndarray:
    """Count-weighted mean of word embeddings; zero for an empty BoW."""
    return provider.embed(as_counts(bow, provider.word_embeddings.shape[0]), doc_ids)


def stage1_inputs(
    counts: np.ndarray,
    model: VibeModel,
    provider: EmbeddingProvider,
    doc_ids: Sequence[str] | None = None,
) -> np.ndarray:
    """[embedding; mean of r^x(z^s|t^x)] for each row of `counts`."""
    shared = model.approx_x.forward(counts)[0].mean
    return np.concatenate([provider.embed(counts, doc_ids), shared], axis=-1)


def stage1_features(
    bow_x: BowVector | np.ndarray,
    state: ModelState,
    doc_ids: Sequence[str] | None = None,
) -> np.ndarray:
    """u_x: the activated hidden layer of the stage-1 head."""
    counts = as_counts(bow_x, state.model.vocab_size)
    inputs = stage1_inputs(counts, state.model, state.provider, doc_ids)
    return state.task1.hidden_features(inputs)[1]


def stage1_predict(
    bow_x: BowVector | np.ndarray,
    state: ModelState,
    doc_ids: Sequence[str] | None = None,
) -> np.ndarray:
    """Stage-1 class probabilities, (C,) for one document or (B, C)."""
    counts = as_counts(bow_x, state.model.vocab_size)
    inputs = stage1_inputs(counts, state.model, state.provider, doc_ids)
    return state.task1.probabilities(inputs)


def _check_labels(labels: np.ndarray, classes: int, name: str = "label") -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise InvalidInputError(
            f"Every {name} must lie in [0, {classes}).",
            {"min": int(labels.min()), "max": int(labels.max()), "classes": classes},
        )
    return labels


def joint_loss_and_grads(
    batch: PairBatch,
    labels: np.ndarray,
    state: ModelState,
    mu: float,
    lambda_: float,
    noise: NoiseDraws,
    doc_ids: Sequence[str] | None = None,
    with_grads: bool = True,
) -> tuple[LossBreakdown, Grads]:
    """Joint stage-1 loss on labeled pairs and its gradients.

    Args:
        batch: Pair counts; rows of `batch.x` are the labeled past documents.
        labels: Class id of each past document.
        state: Parameters.
        mu: Weight of the topic-model loss.
        lambda_: Regularizer weight of the topic objective.
        noise: Reparameterization noise.
        doc_ids: Past document ids, for precomputed embeddings.
        with_grads: Skip the backward pass when False.

    Returns:
        tuple[LossBreakdown, Grads]: Terms (with `classification` and `mu`
        filled in) and gradients keyed like `state.parameters()`.

    Raises:
        InvalidInputError: If `mu` is negative or a label is out of range.
    """
    if mu < 0:
        raise InvalidInputError("mu must be non-negative.", {"mu": mu})
    labels = _check_labels(labels, state.classes)
    if labels.shape[0] != batch.size:
        raise ShapeMismatchError(
            "One label per pair is required.", {"labels": labels.shape[0], "pairs": batch.size}
        )

    model, provider = state.model, state.provider
    shared, approx_cache = model.approx_x.forward(batch.x)
    embedded = provider.embed(batch.x, doc_ids)
    logits, head_cache = state.task1.forward(np.concatenate([embedded, shared.mean], axis=1))
    classification, d_logits = cross_entropy(logits, labels)

    if not with_grads:
        breakdown = vibe_objective(batch, model, lambda_, noise)
        return breakdown.with_classification(classification, mu), {}
    breakdown, ntm_grads = objective_backward(batch, model, lambda_, noise, scale=mu)
    breakdown = breakdown.with_classification(classification, mu)

    grads: Grads = dict(ntm_grads)
    head_grads, d_inputs = state.task1.backward(head_cache, d_logits)
    width = provider.dim
    _merge(grads, _prefixed("task1", head_grads))
    _merge(grads, _prefixed("embed", provider.backward(batch.x, d_inputs[:, :width])))
    d_shared = d_inputs[:, width:]
    _merge(
        grads,
        _prefixed(
            "approx_x",
            model.approx_x.backward(approx_cache, d_shared, np.zeros_like(d_shared)),
        ),
    )
    return breakdown, grads


def joint_loss(
    batch: PairBatch,
    labels: np.ndarray,
    state: ModelState,
    mu: float,
    lambda_: float,
    noise: NoiseDraws,
    doc_ids: Sequence[str] | None = None,
) -> float:
    """L_past + mu * (-objective) on a batch of labeled pairs."""
    breakdown, _ = joint_loss_and_grads(
        batch, labels, state, mu, lambda_, noise, doc_ids, with_grads=False
    )
    return breakdown.joint_loss


def pseudo_label(docs: EncodedDocs, state: ModelState) -> list[PseudoLabeledDoc]:
    """Label every document with its stage-1 argmax."""
    if not len(docs):
        return []
    probs = stage1_predict(docs.counts, state, docs.ids)
    predicted = np.argmax(probs, axis=1)
    confidence = np.clip(probs[np.arange(len(docs)), predicted], 0.0, 1.0)
    labeled = [
        PseudoLabeledDoc(doc_id=doc_id, pseudo_label=int(label), confidence=float(conf))
        for doc_id, label, conf in zip(docs.ids, predicted, confidence, strict=True)
    ]
    logger.info(
        "Pseudo-labeling complete",
        extra={
            "docs": len(labeled),
            "per_class": np.bincount(predicted, minlength=state.classes).tolist(),
        },
    )
    return labeled


@dataclass
class _SphereCache:
    side: Side
    counts: np.ndarray
    encoder: EncoderCache
    approximator: EncoderCache
    theta_variant: np.ndarray
    theta_shared: np.ndarray
    decoder: DecoderCache
    features: np.ndarray
    norms: np.ndarray


def _reconstruct(
    counts: np.ndarray, side: Side, model: VibeModel
) -> tuple[np.ndarray, EncoderCache, EncoderCache, np.ndarray, np.ndarray, DecoderCache]:
    variant, encoder_cache = model.encoder(side).forward(counts)
    shared, approx_cache = model.approximator(side).forward(counts)
    theta_variant = softmax(variant.mean, axis=-1)
    theta_shared = softmax(shared.mean, axis=-1)
    probs, decoder_cache = model.decoder(side).forward(theta_variant, theta_shared)
    return probs, encoder_cache, approx_cache, theta_variant, theta_shared, decoder_cache


def reconstruct_for_projection(
    bow: BowVector | np.ndarray, side: Side, model: VibeModel
) -> np.ndarray:
    """Single-view reconstruction: decode(mean q(z^v|t), mean r(z^s|t))."""
    return _reconstruct(as_counts(bow, model.vocab_size), side, model)[0]


def l2_normalize(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm rows of a (B, D) matrix and the row norms; zero rows become e_0."""
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)
    zero_rows = norms[:, 0] == 0
    if np.any(zero_rows):
        unit[zero_rows, 0] = 1.0
    return unit, norms


def _sphere_forward(
    counts: np.ndarray,
    side: Side,
    state: ModelState,
    doc_ids: Sequence[str] | None,
) -> _SphereCache:
    probs, enc_cache, approx_cache, theta_v, theta_s, dec_cache = _reconstruct(
        counts, side, state.model
    )
    embedded = state.provider.embed(counts, doc_ids)
    features, norms = l2_normalize(np.concatenate([embedded, probs], axis=-1))
    return _SphereCache(
        side, counts, enc_cache, approx_cache, theta_v, theta_s, dec_cache, features, norms
    )


def _sphere_backward(cache: _SphereCache, d_features: np.ndarray, state: ModelState) -> Grads:
    model = state.model
    unit = cache.features
    projected = d_features - unit * np.sum(unit * d_features, axis=1, keepdims=True)
    d_vector = np.divide(
        projected, cache.norms, out=np.zeros_like(projected), where=cache.norms > 0
    )
    width = state.provider.dim
    d_probs = d_vector[:, width:]
    grads: Grads = _prefixed("embed", state.provider.backward(cache.counts, d_vector[:, :width]))

    suffix = _side_suffix(cache.side)
    d_logits = softmax_backward(cache.decoder.probs, d_probs)
    dec_grads, d_theta_v, d_theta_s = model.decoder(cache.side).backward(cache.decoder, d_logits)
    _merge(grads, _prefixed(f"dec_{suffix}", dec_grads))
    d_mean_v = softmax_backward(cache.theta_variant, d_theta_v)
    d_mean_s = softmax_backward(cache.theta_shared, d_theta_s)
    _merge(
        grads,
        _prefixed(
            f"enc_{suffix}",
            model.encoder(cache.side).backward(cache.encoder, d_mean_v, np.zeros_like(d_mean_v)),
        ),
    )
    _merge(
        grads,
        _prefixed(
            f"approx_{suffix}",
            model.approximator(cache.side).backward(
                cache.approximator, d_mean_s, np.zeros_like(d_mean_s)
            ),
        ),
    )
    return grads


def sphere_project(
    bow: BowVector | np.ndarray,
    side: Side,
    state: ModelState,
    doc_ids: Sequence[str] | None = None,
) -> np.ndarray:
    """Unit-norm [embedding; reconstruction] of length E + V."""
    counts = as_counts(bow, state.model.vocab_size)
    single = counts.ndim == 1
    cache = _sphere_forward(np.atleast_2d(counts), side, state, doc_ids)
    return cache.features[0] if single else cache.features


def assign_time_buckets(
    timestamps: np.ndarray,
    future: np.ndarray,
    time_buckets: int,
) -> np.ndarray:
    """Time-head targets for the stage-2 training union.

    Two buckets separate past (0) from adaptive (1) documents. More buckets
    cut the union's timestamps at equal-frequency quantiles, ascending in
    time.

    Raises:
        InvalidInputError: If fewer than two buckets are requested.
    """
    if time_buckets < 2:
        raise InvalidInputError("At least two time buckets are required.", {"T": time_buckets})
    if time_buckets == 2:
        return np.asarray(future, dtype=np.int64)
    stamps = np.asarray(timestamps, dtype=np.float64)
    cuts = np.quantile(stamps, np.arange(1, time_buckets) / time_buckets)
    return np.searchsorted(cuts, stamps, side="right").astype(np.int64)


def stage2_losses(
    features: np.ndarray,
    labels: np.ndarray,
    buckets: np.ndarray,
    state: ModelState,
) -> tuple[float, float, float]:
    """(L_task, L_time, L_sphere) on sphere features.

    Raises:
        InvalidInputError: If a label or bucket is out of range.
    """
    labels = _check_labels(labels, state.task2.classes)
    buckets = _check_labels(buckets, state.time2.classes, name="time bucket")
    task_loss, _ = cross_entropy(state.task2.forward(features)[0], labels)
    time_loss, _ = cross_entropy(state.time2.forward(features)[0], buckets)
    return task_loss, time_loss, task_loss + time_loss


@dataclass(frozen=True)
class Stage2Batch:
    """Documents of the stage-2 training union with their targets.

    Attributes:
        docs: Encoded documents (labels ignored; see `labels`).
        future: True where a document is projected from the future side.
        labels: Gold label for past documents, pseudo-label for adaptive ones.
        buckets: Time-head targets.
    """

    docs: EncodedDocs
    future: np.ndarray
    labels: np.ndarray
    buckets: np.ndarray

    def take(self, rows: np.ndarray) -> Stage2Batch:
        return Stage2Batch(
            self.docs.take(rows), self.future[rows], self.labels[rows], self.buckets[rows]
        )


def _batch_features(
    batch: Stage2Batch, state: ModelState
) -> tuple[np.ndarray, list[tuple[np.ndarray, _SphereCache]]]:
    features = np.zeros((len(batch.docs), state.provider.dim + state.model.vocab_size))
    caches: list[tuple[np.ndarray, _SphereCache]] = []
    for side, mask in (("past", ~batch.future), ("future", batch.future)):
        rows = np.flatnonzero(mask)
        if rows.size == 0:
            continue
        ids = [batch.docs.ids[row] for row in rows]
        cache = _sphere_forward(batch.docs.counts[rows], side, state, ids)
        features[rows] = cache.features
        caches.append((rows, cache))
    return features, caches


def stage2_loss_and_grads(
    batch: Stage2Batch,
    state: ModelState,
    update_all: bool = False,
    features: np.ndarray | None = None,
) -> tuple[tuple[float, float, float], Grads]:
    """Stage-2 losses and gradients.

    Args:
        batch: Training documents and targets.
        state: Parameters.
        update_all: Also differentiate through the projection into the topic
            model and the embeddings.
        features: Precomputed sphere features (frozen projection only).

    Returns:
        tuple: (L_task, L_time, L_sphere) and gradients keyed like
        `state.parameters()`.
    """
    labels = _check_labels(batch.labels, state.task2.classes)
    buckets = _check_labels(batch.buckets, state.time2.classes, name="time bucket")
    caches: list[tuple[np.ndarray, _SphereCache]] = []
    if features is None or update_all:
        features, caches = _batch_features(batch, state)

    task_logits, task_cache = state.task2.forward(features)
    time_logits, time_cache = state.time2.forward(features)
    task_loss, d_task = cross_entropy(task_logits, labels)
    time_loss, d_time = cross_entropy(time_logits, buckets)

    task_grads, d_features_task = state.task2.backward(task_cache, d_task)
    time_grads, d_features_time = state.time2.backward(time_cache, d_time)
    grads = _prefixed("task2", task_grads)
    _merge(grads, _prefixed("time2", time_grads))
    if update_all:
        d_features = d_features_task + d_features_time
        for rows, cache in caches:
            _merge(grads, _sphere_backward(cache, d_features[rows], state))
    return (task_loss, time_loss, task_loss + time_loss), grads


def predict_final(docs: EncodedDocs, state: ModelState) -> np.ndarray:
    """Stage-2 task-head argmax on the future-side projection."""
    features = sphere_project(docs.counts, "future", state, docs.ids)
    return np.argmax(state.task2.forward(features)[0], axis=1)


def predict_labels(docs: EncodedDocs, state: ModelState, variant: Variant = "vibe") -> np.ndarray:
    """Final predictions for a pipeline variant.

    The ablations without a projection stage predict with the stage-1 head.
    """
    if variant == "vibe":
        return predict_final(docs, state)
    return np.argmax(stage1_predict(docs.counts, state, docs.ids), axis=1)


def export_sphere_coordinates(
    docs: EncodedDocs,
    sides: Sequence[Side],
    state: ModelState,
    buckets: np.ndarray | None = None,
) -> list[dict[str, object]]:
    """Rows (doc_id, side, time_bucket, label, x_1 .. x_D) for plotting.

    Raises:
        ShapeMismatchError: If `sides` does not have one entry per document.
    """
    if len(sides) != len(docs):
        raise ShapeMismatchError(
            "One side per document is required.", {"sides": len(sides), "docs": len(docs)}
        )
    future = np.array([side == "future" for side in sides], dtype=bool)
    if buckets is None:
        buckets = future.astype(np.int64)
    batch = Stage2Batch(docs, future, docs.labels, np.asarray(buckets))
    features, _caches = _batch_features(batch, state)
    rows: list[dict[str, object]] = []
    for row, doc_id in enumerate(docs.ids):
        record: dict[str, object] = {
            "doc_id": doc_id,
            "side": sides[row],
            "time_bucket": int(buckets[row]),
            "label": int(docs.labels[row]),
        }
        record.update({f"x_{dim + 1}": float(value) for dim, value in enumerate(features[row])})
        rows.append(record)
    return rows


def write_sphere_coordinates(rows: Sequence[dict[str, object]], path: Path) -> None:
    write_csv(rows, path)


_PSEUDO_HEADER = ["doc_id", "pseudo_label", "confidence"]


def write_pseudo_labels(labeled: Sequence[PseudoLabeledDoc], path: Path) -> None:
    """Write pseudo-labels as tab-separated records with a header row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(_PSEUDO_HEADER)
        for doc in labeled:
            writer.writerow([doc.doc_id, doc.pseudo_label, repr(doc.confidence)])


def read_pseudo_labels(path: Path) -> list[PseudoLabeledDoc]:
    with path.open("r", encoding="utf-8", newline="") as handle:
        return [
            PseudoLabeledDoc(
                doc_id=row["doc_id"],
                pseudo_label=int(row["pseudo_label"]),
                confidence=float(row["confidence"]),
            )
            for row in csv.DictReader(handle, delimiter="\t")
        ]
