"""Two-stage training schedule, gradient checking and grid search.

Schedule
--------
1. Warm-up: `warmup_epochs` epochs minimising the negated topic objective
   over the topic-model partition only.
2. Stage 1: `stage1_epochs` epochs of the joint loss over the topic model,
   the embeddings and the stage-1 task head.
3. Pseudo-labeling of the adaptive documents with the stage-1 head.
4. Stage 2 (`vibe` variant only): `stage2_epochs` epochs of L_sphere over
   the stage-2 heads, or over everything with `stage2_update_all`.

Noise is re-sampled at every step from the run's seeded generator. A
non-finite loss or parameter aborts the run with `DivergenceError`
carrying the state at the start of the failing epoch.
"""

from __future__ import annotations

import csv
import itertools
import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from vibe.core.errors import DivergenceError, InvalidInputError
from vibe.schemas.config import TrainConfig
from vibe.schemas.documents import PairedSample, PseudoLabeledDoc
from vibe.services.classify import (
    Stage2Batch,
    assign_time_buckets,
    joint_loss_and_grads,
    predict_labels,
    pseudo_label,
    sphere_project,
    stage2_loss_and_grads,
)
from vibe.services.corpus import EncodedDocs
from vibe.services.evaluation import accuracy
from vibe.topics.layers import Grads
from vibe.topics.model import NTM_BLOCKS
from vibe.topics.objective import LossBreakdown, NoiseDraws, PairBatch
from vibe.topics.objective import backward as objective_backward
from vibe.topics.optim import Adam
from vibe.topics.state import STAGE1_BLOCKS, STAGE2_HEADS, ModelState

logger = logging.getLogger(__name__)

PHASE_BLOCKS = {"warmup": NTM_BLOCKS, "stage1": STAGE1_BLOCKS}


@dataclass(frozen=True)
class EpochRecord:
    """Mean loss terms of one epoch."""

    stage: str
    epoch: int
    values: dict[str, float]

    def as_row(self) -> dict[str, object]:
        return {"stage": self.stage, "epoch": self.epoch, **self.values}


@dataclass
class TrainResult:
    """A trained state with its per-epoch and per-step histories."""

    state: ModelState
    history: list[EpochRecord] = field(default_factory=list)
    steps: list[LossBreakdown] = field(default_factory=list)


@dataclass(frozen=True)
class PairData:
    """Stage-1 training pairs as aligned arrays.

    Attributes:
        batch: Count matrices of every (past, future) pair.
        labels: Gold label of each pair's past document.
        past_ids: Past document id of each pair.
    """

    batch: PairBatch
    labels: np.ndarray
    past_ids: tuple[str, ...]

    @property
    def size(self) -> int:
        return self.batch.size


def build_pair_data(
    pairs: Sequence[PairedSample],
    past: EncodedDocs,
    pool: EncodedDocs,
) -> PairData:
    """Look up both sides of every pair.

    Pairs referring to documents absent from `past` or `pool` are skipped.

    Raises:
        InvalidInputError: If no pair survives or a past document is unlabeled.
    """
    past_rows = past.row_of()
    pool_rows = pool.row_of()
    kept = [pair for pair in pairs if pair.past in past_rows and pair.future in pool_rows]
    if len(kept) < len(pairs):
        logger.warning(
            "Skipping pairs with unknown documents",
            extra={"skipped": len(pairs) - len(kept)},
        )
    if not kept:
        raise InvalidInputError("No usable training pairs.", {"pairs": len(pairs)})
    x_rows = np.array([past_rows[pair.past] for pair in kept], dtype=np.int64)
    y_rows = np.array([pool_rows[pair.future] for pair in kept], dtype=np.int64)
    labels = past.labels[x_rows]
    if np.any(labels < 0):
        raise InvalidInputError("Every paired past document must be labeled.")
    return PairData(
        batch=PairBatch(past.counts[x_rows], pool.counts[y_rows]),
        labels=labels,
        past_ids=tuple(pair.past for pair in kept),
    )


def init_model(config: TrainConfig, vocab_size: int, classes: int) -> ModelState:
    """Seeded uniform(+-1/sqrt(fan_in)) initialisation of every parameter."""
    rng = np.random.default_rng(config.seed)
    return ModelState.create(
        rng,
        vocab_size=vocab_size,
        n_topics=config.n_topics,
        hidden=config.hidden,
        classes=classes,
        time_buckets=config.time_buckets,
        embed_dim=config.embed_dim,
    )


def _minibatches(rng: np.random.Generator, size: int, batch_size: int) -> list[np.ndarray]:
    order = rng.permutation(size)
    return [order[start : start + batch_size] for start in range(0, size, batch_size)]


def _mean_row(rows: Sequence[Mapping[str, float]], weights: Sequence[int]) -> dict[str, float]:
    total = float(sum(weights))
    return {
        key: sum(row[key] * weight for row, weight in zip(rows, weights, strict=True)) / total
        for key in rows[0]
    }


def _check_finite(
    values: Mapping[str, float],
    state: ModelState | None,
    snapshot: ModelState,
    stage: str,
    epoch: int,
) -> None:
    """Raise DivergenceError on a non-finite loss or, when given, parameter."""
    finite = bool(np.all(np.isfinite(list(values.values()))))
    if not finite or (state is not None and not state.is_finite()):
        logger.warning("Training diverged", extra={"stage": stage, "epoch": epoch})
        raise DivergenceError(
            f"Non-finite loss during {stage} epoch {epoch}.",
            last_state=snapshot,
            details={"stage": stage, "epoch": epoch},
        )


def train_phase(
    data: PairData,
    config: TrainConfig,
    state: ModelState,
    stage: str,
    epochs: int,
    rng: np.random.Generator,
    result: TrainResult | None = None,
) -> TrainResult:
    """Run `epochs` epochs of one stage-1 phase, appending to `result`.

    The warm-up phase minimises the negated topic objective and updates the
    topic-model blocks only; the stage-1 phase minimises the joint loss over
    `STAGE1_BLOCKS`.

    Raises:
        InvalidInputError: If `stage` is not a stage-1 phase.
        DivergenceError: If a loss or parameter becomes non-finite.
    """
    if stage not in PHASE_BLOCKS:
        raise InvalidInputError(f"Unknown stage-1 phase {stage!r}.", {"stage": stage})
    result = result if result is not None else TrainResult(state=state)
    lambda_ = config.effective_lambda
    params = state.parameters(PHASE_BLOCKS[stage])
    optimizer = Adam(config.learning_rate)
    for epoch in range(epochs):
        snapshot = state.copy()
        rows_seen: list[dict[str, float]] = []
        sizes: list[int] = []
        for rows in _minibatches(rng, data.size, config.batch_size):
            batch = data.batch.rows(rows)
            noise = NoiseDraws.sample(rng, config.noise_draws, len(rows), state.model.n_topics)
            if stage == "warmup":
                breakdown, grads = objective_backward(batch, state.model, lambda_, noise)
                breakdown = breakdown.with_classification(0.0, 1.0)
            else:
                breakdown, grads = joint_loss_and_grads(
                    batch,
                    data.labels[rows],
                    state,
                    config.mu,
                    lambda_,
                    noise,
                    [data.past_ids[row] for row in rows],
                )
            _check_finite(breakdown.as_row(), None, snapshot, stage, epoch)
            optimizer.step(params, {name: grads[name] for name in params if name in grads})
            result.steps.append(breakdown)
            rows_seen.append(breakdown.as_row())
            sizes.append(len(rows))
        _check_finite({}, state, snapshot, stage, epoch)
        record = EpochRecord(stage, epoch, _mean_row(rows_seen, sizes))
        result.history.append(record)
        logger.info(
            "Epoch complete",
            extra={"stage": stage, "epoch": epoch, "loss": record.values["joint_loss"]},
        )
    return result


def train_stage1(
    data: PairData,
    config: TrainConfig,
    state: ModelState,
) -> TrainResult:
    """Warm-up on the topic objective, then joint training.

    Args:
        data: Labeled training pairs.
        config: Epochs, batch size, learning rate, lambda and mu.
        state: Initial parameters; updated in place and returned.

    Raises:
        DivergenceError: If a loss or parameter becomes non-finite.
    """
    rng = np.random.default_rng([config.seed, 1])
    result = TrainResult(state=state)
    logger.info(
        "Stage 1 started",
        extra={
            "pairs": data.size,
            "warmup_epochs": config.warmup_epochs,
            "epochs": config.stage1_epochs,
        },
    )
    train_phase(data, config, state, "warmup", config.warmup_epochs, rng, result)
    train_phase(data, config, state, "stage1", config.stage1_epochs, rng, result)
    logger.info("Stage 1 complete", extra={"steps": len(result.steps)})
    return result


def build_stage2_batch(
    past: EncodedDocs,
    adaptive: EncodedDocs,
    pseudo: Sequence[PseudoLabeledDoc],
    time_buckets: int,
) -> Stage2Batch:
    """Union of labeled past documents and pseudo-labeled adaptive documents."""
    adaptive_rows = adaptive.row_of()
    labeled = [doc for doc in pseudo if doc.doc_id in adaptive_rows]
    adaptive_part = adaptive.take([adaptive_rows[doc.doc_id] for doc in labeled])
    docs = EncodedDocs(
        ids=past.ids + adaptive_part.ids,
        counts=np.vstack([past.counts, adaptive_part.counts]),
        timestamps=np.concatenate([past.timestamps, adaptive_part.timestamps]),
        labels=np.concatenate([past.labels, adaptive_part.labels]),
    )
    future = np.concatenate([np.zeros(len(past), dtype=bool), np.ones(len(labeled), dtype=bool)])
    labels = np.concatenate(
        [past.labels, np.array([doc.pseudo_label for doc in labeled], dtype=np.int64)]
    )
    buckets = assign_time_buckets(docs.timestamps, future, time_buckets)
    return Stage2Batch(docs, future, labels, buckets)


def train_stage2(batch: Stage2Batch, config: TrainConfig, state: ModelState) -> TrainResult:
    """Minimise L_sphere; the projection stays frozen unless `stage2_update_all`.

    Raises:
        InvalidInputError: If the batch is empty.
        DivergenceError: If a loss or parameter becomes non-finite.
    """
    if not len(batch.docs):
        raise InvalidInputError("Stage 2 needs at least one training document.")
    rng = np.random.default_rng([config.seed, 2])
    update_all = config.stage2_update_all
    params = state.parameters(None if update_all else STAGE2_HEADS)
    optimizer = Adam(config.learning_rate)
    features = None
    if not update_all:
        features = np.zeros((len(batch.docs), state.provider.dim + state.model.vocab_size))
        for side, mask in (("past", ~batch.future), ("future", batch.future)):
            rows = np.flatnonzero(mask)
            if rows.size:
                ids = [batch.docs.ids[row] for row in rows]
                features[rows] = sphere_project(batch.docs.counts[rows], side, state, ids)

    result = TrainResult(state=state)
    logger.info(
        "Stage 2 started",
        extra={"docs": len(batch.docs), "epochs": config.stage2_epochs, "update_all": update_all},
    )
    for epoch in range(config.stage2_epochs):
        snapshot = state.copy()
        rows_seen: list[dict[str, float]] = []
        sizes: list[int] = []
        for rows in _minibatches(rng, len(batch.docs), config.batch_size):
            (task_loss, time_loss, sphere_loss), grads = stage2_loss_and_grads(
                batch.take(rows),
                state,
                update_all=update_all,
                features=None if features is None else features[rows],
            )
            values = {"task": task_loss, "time": time_loss, "sphere": sphere_loss}
            _check_finite(values, None, snapshot, "stage2", epoch)
            optimizer.step(params, {name: grads[name] for name in params if name in grads})
            rows_seen.append(values)
            sizes.append(len(rows))
        _check_finite({}, state, snapshot, "stage2", epoch)
        record = EpochRecord("stage2", epoch, _mean_row(rows_seen, sizes))
        result.history.append(record)
        logger.info(
            "Epoch complete",
            extra={"stage": "stage2", "epoch": epoch, "loss": record.values["sphere"]},
        )
    logger.info("Stage 2 complete", extra={"epochs": config.stage2_epochs})
    return result


@dataclass(frozen=True)
class TwoStageData:
    """Inputs of one complete training run.

    Attributes:
        pairs: Labeled stage-1 pairs.
        train: Labeled past documents.
        adaptive: Unlabeled future documents to pseudo-label.
        classes: Number of task classes.
    """

    pairs: PairData
    train: EncodedDocs
    adaptive: EncodedDocs
    classes: int


@dataclass
class FitResult:
    """Outcome of `fit_two_stage`."""

    state: ModelState
    stage1: TrainResult
    stage2: TrainResult | None
    pseudo_labels: list[PseudoLabeledDoc]

    @property
    def history(self) -> list[EpochRecord]:
        return self.stage1.history + (self.stage2.history if self.stage2 else [])


def fit_two_stage(data: TwoStageData, config: TrainConfig) -> FitResult:
    """Initialise and run the whole schedule for `config.variant`."""
    state = init_model(config, data.train.counts.shape[1], data.classes)
    stage1 = train_stage1(data.pairs, config, state)
    pseudo = pseudo_label(data.adaptive, state)
    stage2 = None
    if config.variant == "vibe":
        batch = build_stage2_batch(data.train, data.adaptive, pseudo, config.time_buckets)
        stage2 = train_stage2(batch, config, state)
    return FitResult(state=state, stage1=stage1, stage2=stage2, pseudo_labels=pseudo)


def write_history(records: Sequence[EpochRecord], path: Path) -> None:
    """Write epoch records as comma-separated values.

    Stage-2 records carry different columns from stage-1 ones; missing cells
    are left empty.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [record.as_row() for record in records]
    columns: list[str] = []
    for row in rows:
        columns.extend(key for key in row if key not in columns)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


@dataclass(frozen=True)
class GradCheckReport:
    """Finite-difference comparison of analytic gradients.

    Attributes:
        max_relative_error: Worst relative error over every checked entry.
        per_parameter: Worst relative error per parameter name.
        checked: Number of entries compared.
        tolerance: Pass threshold.
    """

    max_relative_error: float
    per_parameter: dict[str, float]
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)


def grad_check(
    params: Mapping[str, np.ndarray],
    loss_and_grads: Callable[[], tuple[float, Grads]],
    step: float = 1e-4,
    tol: float = 1e-3,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    `loss_and_grads` must be deterministic and read `params` in place;
    entries are perturbed one at a time and restored.

    Args:
        params: Parameters to check, keyed like the gradients.
        loss_and_grads: Returns the loss and its gradients.
        step: Finite-difference step.
        tol: Maximum relative error for `passed`.
        max_entries: Check at most this many random entries per tensor.
        seed: Seed for choosing entries when `max_entries` is set.
    """
    rng = np.random.default_rng(seed)
    _loss, analytic = loss_and_grads()
    per_parameter: dict[str, float] = {}
    checked = 0
    for name, array in params.items():
        grad = analytic.get(name, np.zeros_like(array))
        flat = array.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for index in indices:
            original = flat[index]
            flat[index] = original + step
            plus = loss_and_grads()[0]
            flat[index] = original - step
            minus = loss_and_grads()[0]
            flat[index] = original
            numeric = (plus - minus) / (2.0 * step)
            worst = max(worst, relative_error(float(grad.reshape(-1)[index]), numeric))
            checked += 1
        per_parameter[name] = worst
    max_error = max(per_parameter.values(), default=0.0)
    logger.info(
        "Gradient check complete",
        extra={"checked": checked, "max_relative_error": max_error},
    )
    return GradCheckReport(max_error, per_parameter, checked, tol)


def objective_grad_check(
    seed: int = 0,
    vocab_size: int = 30,
    n_topics: int = 4,
    hidden: int = 16,
    batch_size: int = 3,
    lambda_: float = 1.0,
    mu: float = 1.0,
    classes: int = 3,
    step: float = 1e-4,
    tol: float = 1e-3,
    max_entries: int | None = None,
) -> GradCheckReport:
    """Gradient check of the joint stage-1 loss on a small random model.

    Covers the regularized topic objective (scaled by `mu`) and the stage-1
    classification loss with fixed noise.
    """
    rng = np.random.default_rng(seed)
    state = ModelState.create(rng, vocab_size, n_topics, hidden, classes, 2, 8)
    batch = PairBatch(
        rng.integers(0, 3, size=(batch_size, vocab_size)).astype(np.float64),
        rng.integers(0, 3, size=(batch_size, vocab_size)).astype(np.float64),
    )
    labels = rng.integers(0, classes, size=batch_size)
    noise = NoiseDraws.sample(rng, 1, batch_size, n_topics)

    def loss_and_grads() -> tuple[float, Grads]:
        breakdown, grads = joint_loss_and_grads(batch, labels, state, mu, lambda_, noise)
        return breakdown.joint_loss, grads

    return grad_check(state.parameters(STAGE1_BLOCKS), loss_and_grads, step, tol, max_entries, seed)


@dataclass(frozen=True)
class GridCell:
    """One grid-search evaluation."""

    lambda_: float
    mu: float
    learning_rate: float
    seed: int
    accuracy: float
    diverged: bool = False


@dataclass
class GridResult:
    """Every cell in grid order plus the winner."""

    cells: list[GridCell]
    best: GridCell
    best_config: TrainConfig
    best_fit: FitResult


def _grid_key(cell: GridCell) -> tuple[float, float, float, float]:
    score = -np.inf if cell.diverged else cell.accuracy
    return (-score, cell.lambda_, cell.mu, cell.learning_rate)


def _run_cell(
    data: TwoStageData,
    validation: EncodedDocs,
    config: TrainConfig,
) -> tuple[GridCell, FitResult | None]:
    try:
        fit = fit_two_stage(data, config)
    except DivergenceError:
        cell = GridCell(config.lambda_, config.mu, config.learning_rate, config.seed, 0.0, True)
        return cell, None
    predicted = predict_labels(validation, fit.state, config.variant)
    score = accuracy(predicted, validation.labels)
    return GridCell(config.lambda_, config.mu, config.learning_rate, config.seed, score), fit


def grid_search(
    data: TwoStageData,
    validation: EncodedDocs,
    config: TrainConfig,
) -> GridResult:
    """Exhaustive search over lambda x mu x learning rate on validation accuracy.

    Cells run as isolated jobs (`config.n_jobs` in parallel) with seeds
    spawned from `config.seed`; `best_config` carries the winning cell's
    seed so refitting it reproduces `best_fit`. Ties prefer lower lambda,
    then lower mu, then lower learning rate, and diverged cells always lose.

    Raises:
        InvalidInputError: If the grid is empty or validation is unlabeled.
        DivergenceError: If every cell diverges.
    """
    grid = list(itertools.product(config.grid_lambda, config.grid_mu, config.grid_learning_rate))
    if not grid:
        raise InvalidInputError("The hyperparameter grid is empty.")
    if not validation.labeled:
        raise InvalidInputError("Grid search needs labeled validation documents.")
    children = np.random.SeedSequence(config.seed).spawn(len(grid))
    seeds = [int(child.generate_state(1)[0]) for child in children]
    cell_configs = [
        config.with_overrides(**{"lambda": lam, "mu": mu, "learning_rate": lr, "seed": seed})
        for (lam, mu, lr), seed in zip(grid, seeds, strict=True)
    ]
    logger.info("Grid search started", extra={"cells": len(grid), "n_jobs": config.n_jobs})
    outcomes = Parallel(n_jobs=config.n_jobs)(
        delayed(_run_cell)(data, validation, cell_config) for cell_config in cell_configs
    )
    cells = [cell for cell, _fit in outcomes]
    for cell in cells:
        logger.info(
            "Grid cell complete",
            extra={
                "lambda": cell.lambda_,
                "mu": cell.mu,
                "learning_rate": cell.learning_rate,
                "accuracy": cell.accuracy,
                "diverged": cell.diverged,
            },
        )
    best_index = min(range(len(cells)), key=lambda idx: _grid_key(cells[idx]))
    best, best_fit = outcomes[best_index]
    if best_fit is None:
        raise DivergenceError("Every grid cell diverged.", details={"cells": len(cells)})
    best_config = config.with_overrides(
        **{
            "lambda": best.lambda_,
            "mu": best.mu,
            "learning_rate": best.learning_rate,
            "seed": best.seed,
        }
    )
    logger.info(
        "Grid search complete",
        extra={"accuracy": best.accuracy, "lambda": best.lambda_, "mu": best.mu},
    )
    return GridResult(cells=cells, best=best, best_config=best_config, best_fit=best_fit)
