"""End-to-end temporal adaptation run over one labeled dataset.

Execution Flow
--------------
1. Split the documents by time (or take a precomputed split).
2. Build the vocabulary over every document available at training time
   (train, validation and golden adaptive); test documents never shape it.
3. Pair each training document with its top-N later adaptive documents.
4. Train both stages, or run the grid search when asked to.
5. Predict the test documents with the variant's final classifier.
6. Optionally train the past-only baseline on the same training documents.

Documents with no in-vocabulary token are dropped from every role with a
WARNING count. The run is deterministic for a fixed (docs, config).
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from vibe.core.errors import InvalidInputError
from vibe.schemas.config import TrainConfig
from vibe.schemas.documents import PairedSample, SplitSpec, TimedDocument, Vocabulary
from vibe.schemas.reports import EvalReport
from vibe.services.classify import predict_labels, sphere_project
from vibe.services.corpus import (
    EncodedDocs,
    build_vocabulary,
    encode_documents,
    select,
    temporal_split,
    trainable,
    vocab_overlap,
)
from vibe.services.evaluation import (
    accuracy,
    mmd_rbf,
    past_only_baseline,
    run_report,
    tfidf_features,
)
from vibe.services.retrieval import pair_training_set
from vibe.services.training import (
    FitResult,
    GridResult,
    TwoStageData,
    build_pair_data,
    fit_two_stage,
    grid_search,
)
from vibe.topics.state import ModelState

logger = logging.getLogger(__name__)

OVERLAP_TOP_K = 5000
MMD_MAX_DOCS = 1000


@dataclass
class PipelineResult:
    """Outcome of one pipeline run.

    Attributes:
        split: Temporal split used.
        vocab: Vocabulary the model was trained over.
        pairs: Stage-1 training pairs.
        fit: Trained state, histories and pseudo-labels.
        config: Effective configuration (the grid winner after a search).
        test: Encoded test documents.
        predictions: Final class id per test document.
        accuracy: Test accuracy of the variant.
        baseline_accuracy: Past-only baseline accuracy, when trained.
        grid: Grid-search cells, when a search ran.
    """

    split: SplitSpec
    vocab: Vocabulary
    pairs: list[PairedSample]
    fit: FitResult
    config: TrainConfig
    test: EncodedDocs
    predictions: np.ndarray
    accuracy: float
    baseline_accuracy: float | None = None
    grid: GridResult | None = None


def run_vocabulary(
    docs: Sequence[TimedDocument],
    split: SplitSpec,
    max_vocab: int,
) -> Vocabulary:
    """Vocabulary over the train, validation and golden adaptive documents."""
    known = select(docs, split.train + split.validation + split.golden_adaptive)
    return build_vocabulary(known, max_size=max_vocab)


def _role_docs(
    docs: Sequence[TimedDocument],
    ids: Sequence[str],
    vocab: Vocabulary,
) -> list[TimedDocument]:
    return trainable(select(docs, ids), vocab)


def encode_role(
    docs: Sequence[TimedDocument],
    ids: Sequence[str],
    vocab: Vocabulary,
) -> EncodedDocs:
    """Encode the trainable documents among `ids`, in `ids` order."""
    return encode_documents(_role_docs(docs, ids, vocab), vocab)


def _num_classes(docs: Sequence[TimedDocument], classes: int | None) -> int:
    if classes is not None:
        return classes
    labels = [doc.label for doc in docs if doc.label is not None]
    if not labels:
        raise InvalidInputError("The dataset has no labeled documents.")
    return max(labels) + 1


def run_pipeline(
    docs: Sequence[TimedDocument],
    config: TrainConfig,
    classes: int | None = None,
    split: SplitSpec | None = None,
    mode: Literal["relative", "absolute"] = "relative",
    cut_points: Sequence[int] | None = None,
    search: bool = False,
    with_baseline: bool = True,
) -> PipelineResult:
    """Split, pair, train, predict and score in one call.

    Args:
        docs: Labeled, timestamped documents.
        config: Training configuration; its seed drives every random step.
        classes: Number of task classes; inferred from labels when omitted.
        split: Precomputed split; computed from `mode`/`cut_points` otherwise.
        mode: Split mode when no split is given.
        cut_points: Absolute-mode boundaries.
        search: Run the grid search and keep the winner.
        with_baseline: Also train and score the past-only baseline.

    Returns:
        PipelineResult: Everything later reporting needs.

    Raises:
        InvalidInputError: If a role is empty or the train/test documents
            are unlabeled.
    """
    logger.info(
        "Pipeline started",
        extra={"docs": len(docs), "variant": config.variant, "seed": config.seed},
    )
    n_classes = _num_classes(docs, classes)
    if split is None:
        split = temporal_split(docs, mode=mode, cut_points=cut_points, seed=config.seed)

    vocab = run_vocabulary(docs, split, config.max_vocab)

    train_docs = _role_docs(docs, split.train, vocab)
    adaptive_docs = _role_docs(docs, split.golden_adaptive, vocab)
    validation_docs = _role_docs(docs, split.validation, vocab)
    test_docs = _role_docs(docs, split.test, vocab)
    for role, members in (("train", train_docs), ("adaptive", adaptive_docs), ("test", test_docs)):
        if not members:
            raise InvalidInputError(f"The {role} role is empty after preprocessing.")

    pairs = pair_training_set(
        train_docs,
        adaptive_docs,
        n=config.retrieval_depth,
        vocab=vocab,
        scheme=config.retrieval_scheme,
        seed=config.seed,
    )
    train = encode_documents(train_docs, vocab)
    adaptive = encode_documents(adaptive_docs, vocab).without_labels()
    test = encode_documents(test_docs, vocab)
    if not (train.labeled and test.labeled):
        raise InvalidInputError("Training and test documents must all be labeled.")
    data = TwoStageData(build_pair_data(pairs, train, adaptive), train, adaptive, n_classes)

    grid: GridResult | None = None
    effective = config
    if search:
        validation = encode_documents(validation_docs, vocab)
        grid = grid_search(data, validation, config)
        fit, effective = grid.best_fit, grid.best_config
    else:
        fit = fit_two_stage(data, config)

    predictions = predict_labels(test, fit.state, effective.variant)
    score = accuracy(predictions, test.labels)

    baseline_score: float | None = None
    if with_baseline:
        baseline = past_only_baseline(train, effective, classes=n_classes)
        baseline_score = accuracy(baseline.predict(test), test.labels)

    logger.info(
        "Pipeline completed",
        extra={
            "pairs": len(pairs),
            "test": len(test),
            "accuracy": score,
            "baseline_accuracy": baseline_score,
        },
    )
    return PipelineResult(
        split=split,
        vocab=vocab,
        pairs=pairs,
        fit=fit,
        config=effective,
        test=test,
        predictions=predictions,
        accuracy=score,
        baseline_accuracy=baseline_score,
        grid=grid,
    )


def _cap_rows(encoded: EncodedDocs, seed: int) -> EncodedDocs:
    if len(encoded) <= MMD_MAX_DOCS:
        return encoded
    rng = np.random.default_rng(seed)
    return encoded.take(np.sort(rng.choice(len(encoded), MMD_MAX_DOCS, replace=False)))


def shift_diagnostics(
    docs: Sequence[TimedDocument],
    split: SplitSpec,
    vocab: Vocabulary,
    state: ModelState,
    seed: int = 0,
    k: int = OVERLAP_TOP_K,
) -> tuple[dict[str, float], dict[str, float]]:
    """Vocabulary overlaps and MMD scores between the split roles.

    Raw-data MMD compares tf-idf rows; model-space MMD compares sphere
    projections (train read as past, test as future). Each side is
    subsampled to at most MMD_MAX_DOCS documents with `seed`.

    Returns:
        tuple[dict[str, float], dict[str, float]]: (overlaps, mmd scores).
    """
    train_docs = select(docs, split.train)
    adaptive_docs = select(docs, split.golden_adaptive)
    test_docs = select(docs, split.test)
    overlaps = {
        "train_vs_adaptive": vocab_overlap(train_docs, adaptive_docs, k),
        "train_vs_test": vocab_overlap(train_docs, test_docs, k),
        "adaptive_vs_test": vocab_overlap(adaptive_docs, test_docs, k),
    }

    train = _cap_rows(encode_role(docs, split.train, vocab), seed)
    test = _cap_rows(encode_role(docs, split.test, vocab), seed)
    mmd_scores: dict[str, float] = {}
    if len(train) >= 2 and len(test) >= 2:
        raw = tfidf_features(np.vstack([train.counts, test.counts]))
        mmd_scores["tfidf_train_vs_test"] = mmd_rbf(raw[: len(train)], raw[len(train) :])
        mmd_scores["sphere_train_vs_test"] = mmd_rbf(
            sphere_project(train.counts, "past", state, train.ids),
            sphere_project(test.counts, "future", state, test.ids),
        )
    logger.info("Shift diagnostics complete", extra={"overlaps": overlaps, "mmd": mmd_scores})
    return overlaps, mmd_scores


def pipeline_report(
    docs: Sequence[TimedDocument],
    result: PipelineResult,
    classes: int,
    retriever_accuracies: dict[str, float] | None = None,
    accuracy_vs_n: Sequence[tuple[int, float]] | None = None,
) -> EvalReport:
    """EvalReport of a finished run, shift diagnostics included."""
    overlaps, mmd_scores = shift_diagnostics(
        docs, result.split, result.vocab, result.fit.state, seed=result.config.seed
    )
    return run_report(
        result.predictions,
        result.test.labels,
        classes,
        config=result.config,
        mmd_scores=mmd_scores,
        vocab_overlaps=overlaps,
        baseline_accuracy=result.baseline_accuracy,
        retriever_accuracies=retriever_accuracies,
        accuracy_vs_n=accuracy_vs_n,
    )
