"""Evaluation: accuracy, distribution shift, baselines and report files.

MMD Estimator
-------------
Unbiased squared MMD with an RBF kernel k(a, b) = exp(-|a - b|^2 / (2 s^2)),
where s is the median pairwise Euclidean distance over the pooled sample
(s = 1 when that median is zero). Reported values are clamped at zero.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist
from sklearn.feature_extraction.text import TfidfTransformer

from vibe.core.errors import InvalidInputError, ShapeMismatchError
from vibe.schemas.config import TrainConfig
from vibe.schemas.reports import ClassScores, CurvePoint, EvalReport
from vibe.services.corpus import EncodedDocs
from vibe.topics.embedding import EmbeddingProvider
from vibe.topics.layers import ClassifierHead, cross_entropy
from vibe.topics.optim import Adam

logger = logging.getLogger(__name__)


def accuracy(predictions: Sequence[int] | np.ndarray, gold: Sequence[int] | np.ndarray) -> float:
    """Fraction of exact matches.

    Raises:
        ShapeMismatchError: If the lengths differ.
        InvalidInputError: If both are empty.
    """
    predicted = np.asarray(predictions)
    expected = np.asarray(gold)
    if predicted.shape != expected.shape:
        raise ShapeMismatchError(
            "Predictions and gold labels differ in length.",
            {"predictions": predicted.size, "gold": expected.size},
        )
    if predicted.size == 0:
        raise InvalidInputError("Cannot score an empty prediction list.")
    return float(np.mean(predicted == expected))


def per_class_scores(
    predictions: Sequence[int] | np.ndarray,
    gold: Sequence[int] | np.ndarray,
    classes: int,
) -> list[ClassScores]:
    """Precision and recall per class; 0 where a class is never predicted or present."""
    predicted = np.asarray(predictions)
    expected = np.asarray(gold)
    scores: list[ClassScores] = []
    for label in range(classes):
        hits = int(np.sum((predicted == label) & (expected == label)))
        n_predicted = int(np.sum(predicted == label))
        support = int(np.sum(expected == label))
        scores.append(
            ClassScores(
                label=label,
                precision=hits / n_predicted if n_predicted else 0.0,
                recall=hits / support if support else 0.0,
                support=support,
            )
        )
    return scores


def median_bandwidth(pooled: np.ndarray) -> float:
    distances = pdist(pooled)
    median = float(np.median(distances)) if distances.size else 0.0
    return median if median > 0 else 1.0


def mmd_rbf(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Unbiased squared MMD between two samples, clamped at zero.

    Raises:
        InvalidInputError: If either sample has fewer than two rows.
        ShapeMismatchError: If the feature dimensions differ.
    """
    a = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatchError(
            "Samples must share a feature dimension.", {"a": a.shape[1], "b": b.shape[1]}
        )
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise InvalidInputError(
            "Each sample needs at least two rows.", {"a": a.shape[0], "b": b.shape[0]}
        )
    bandwidth = median_bandwidth(np.vstack([a, b]))
    gamma = 1.0 / (2.0 * bandwidth**2)
    k_aa = np.exp(-gamma * cdist(a, a, "sqeuclidean"))
    k_bb = np.exp(-gamma * cdist(b, b, "sqeuclidean"))
    k_ab = np.exp(-gamma * cdist(a, b, "sqeuclidean"))
    m, n = a.shape[0], b.shape[0]
    term_aa = (k_aa.sum() - np.trace(k_aa)) / (m * (m - 1))
    term_bb = (k_bb.sum() - np.trace(k_bb)) / (n * (n - 1))
    return max(float(term_aa + term_bb - 2.0 * k_ab.mean()), 0.0)


def tfidf_features(counts: np.ndarray) -> np.ndarray:
    """Dense L2-normalised tf-idf rows for raw-data shift comparisons."""
    transformer = TfidfTransformer(norm="l2", use_idf=True, smooth_idf=True)
    return np.asarray(transformer.fit_transform(counts).todense())


@dataclass(eq=False)
class BaselineClassifier:
    """Embedding bag plus MLP head trained on past data only."""

    provider: EmbeddingProvider
    head: ClassifierHead

    def predict_proba(self, docs: EncodedDocs) -> np.ndarray:
        return self.head.probabilities(self.provider.embed(docs.counts, docs.ids))

    def predict(self, docs: EncodedDocs) -> np.ndarray:
        return np.argmax(self.predict_proba(docs), axis=1)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {f"embed.{name}": value for name, value in self.provider.params().items()}
        params.update({f"head.{name}": value for name, value in self.head.params().items()})
        return params


def past_only_baseline(
    train: EncodedDocs,
    config: TrainConfig,
    classes: int | None = None,
    provider: EmbeddingProvider | None = None,
) -> BaselineClassifier:
    """Train the past-only classifier by cross-entropy.

    Runs `warmup_epochs + stage1_epochs` epochs so it sees as many updates as
    the first stage of the full pipeline.

    Raises:
        InvalidInputError: If `train` is empty or unlabeled.
    """
    if not train.labeled:
        raise InvalidInputError("The baseline needs labeled training documents.")
    n_classes = classes if classes is not None else int(train.labels.max()) + 1
    rng = np.random.default_rng(config.seed)
    if provider is None:
        provider = EmbeddingProvider.create(rng, train.counts.shape[1], config.embed_dim)
    head = ClassifierHead.create(rng, provider.dim, config.hidden, n_classes)
    baseline = BaselineClassifier(provider, head)
    optimizer = Adam(config.learning_rate)
    params = baseline.parameters()
    epochs = config.warmup_epochs + config.stage1_epochs
    logger.info("Training past-only baseline", extra={"docs": len(train), "epochs": epochs})
    for epoch in range(epochs):
        order = rng.permutation(len(train))
        losses: list[float] = []
        for start in range(0, len(order), config.batch_size):
            rows = order[start : start + config.batch_size]
            ids = [train.ids[row] for row in rows]
            embedded = provider.embed(train.counts[rows], ids)
            logits, cache = head.forward(embedded)
            loss, d_logits = cross_entropy(logits, train.labels[rows])
            head_grads, d_embedded = head.backward(cache, d_logits)
            grads = {f"head.{name}": value for name, value in head_grads.items()}
            grads.update(
                {
                    f"embed.{name}": value
                    for name, value in provider.backward(train.counts[rows], d_embedded).items()
                }
            )
            optimizer.step(params, grads)
            losses.append(loss)
        logger.info(
            "Baseline epoch complete",
            extra={"epoch": epoch, "loss": float(np.mean(losses))},
        )
    return baseline


def paired_comparison(a: Sequence[float], b: Sequence[float]) -> tuple[float, int, int]:
    """(mean of a - b, number of positive differences, number of pairs).

    Raises:
        ShapeMismatchError: If the sequences differ in length.
        InvalidInputError: If they are empty.
    """
    if len(a) != len(b):
        raise ShapeMismatchError("Paired samples differ in length.", {"a": len(a), "b": len(b)})
    if not a:
        raise InvalidInputError("Paired comparison needs at least one pair.")
    diffs = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(diffs.mean()), int(np.sum(diffs > 0)), int(diffs.size)


def run_report(
    predictions: Sequence[int] | np.ndarray,
    gold: Sequence[int] | np.ndarray,
    classes: int,
    config: TrainConfig | None = None,
    mmd_scores: Mapping[str, float] | None = None,
    vocab_overlaps: Mapping[str, float] | None = None,
    baseline_accuracy: float | None = None,
    retriever_accuracies: Mapping[str, float] | None = None,
    accuracy_vs_n: Sequence[tuple[int, float]] | None = None,
    seeds: Sequence[int] | None = None,
) -> EvalReport:
    """Assemble an EvalReport from raw predictions and precomputed diagnostics."""
    snapshot = config.model_dump(by_alias=True) if config is not None else {}
    return EvalReport(
        accuracy=accuracy(predictions, gold),
        per_class=per_class_scores(predictions, gold, classes),
        mmd_scores=dict(mmd_scores or {}),
        vocab_overlaps=dict(vocab_overlaps or {}),
        baseline_accuracy=baseline_accuracy,
        retriever_accuracies=dict(retriever_accuracies or {}),
        accuracy_vs_n=[CurvePoint(n=n, accuracy=acc) for n, acc in (accuracy_vs_n or [])],
        config=snapshot,
        seeds=list(seeds) if seeds is not None else ([config.seed] if config else []),
        variant=config.variant if config is not None else "vibe",
    )


def write_report(report: EvalReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")


def read_report(path: Path) -> EvalReport:
    return EvalReport.model_validate_json(path.read_text(encoding="utf-8"))


def write_csv(rows: Sequence[Mapping[str, object]], path: Path) -> None:
    """Comma-separated values with a header taken from the first row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        if not rows:
            return
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def write_plot_data(report: EvalReport, directory: Path) -> list[Path]:
    """Write the overlap, MMD and accuracy-vs-N tables behind the report plots."""
    written: list[Path] = []
    tables = {
        "vocab_overlap.csv": [
            {"pair": name, "overlap": value} for name, value in report.vocab_overlaps.items()
        ],
        "mmd.csv": [{"pair": name, "mmd": value} for name, value in report.mmd_scores.items()],
        "accuracy_vs_n.csv": [
            {"n": point.n, "accuracy": point.accuracy} for point in report.accuracy_vs_n
        ],
    }
    for filename, rows in tables.items():
        if rows:
            write_csv(rows, directory / filename)
            written.append(directory / filename)
    return written
