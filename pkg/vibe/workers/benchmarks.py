"""Benchmark studies on synthetic evolving corpora.

Each study repeats a pipeline run over several seeds. Seed s regenerates
the corpus with `DriftSpec.seed = s` and trains with `TrainConfig.seed = s`,
so study rows are paired across the compared settings.

Corpora with three or more periods are split at period boundaries: the
second-to-last period supplies validation and adaptive documents and the
last period is the test set. Shorter corpora use the relative split.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vibe.schemas.config import DriftSpec, TrainConfig
from vibe.schemas.documents import TimedDocument
from vibe.services.corpus import encode_documents, trainable
from vibe.services.evaluation import paired_comparison, write_csv
from vibe.services.synth import SyntheticCorpus, gen_corpus, latent_means, probe_disentanglement
from vibe.workers.pipeline import PipelineResult, run_pipeline

logger = logging.getLogger(__name__)


@dataclass
class StudyResult:
    """Per-seed rows of a study and the paired comparison of two columns.

    Attributes:
        name: Study name.
        rows: One mapping per seed, `seed` included.
        compared: The (a, b) column names behind `mean_difference`.
        mean_difference: Mean of a - b over seeds.
        positive: Seeds where a > b.
        count: Number of seeds.
    """

    name: str
    rows: list[dict[str, float]] = field(default_factory=list)
    compared: tuple[str, str] = ("", "")
    mean_difference: float = 0.0
    positive: int = 0
    count: int = 0

    def column(self, name: str) -> list[float]:
        return [row[name] for row in self.rows]

    def compare(self, a: str, b: str) -> None:
        self.compared = (a, b)
        self.mean_difference, self.positive, self.count = paired_comparison(
            self.column(a), self.column(b)
        )

    def write(self, path: Path) -> None:
        write_csv(self.rows, path)


def period_cut_points(spec: DriftSpec) -> list[int] | None:
    """Absolute cut points isolating the last two periods, when there are three or more."""
    if spec.periods < 3:
        return None
    return [
        spec.start_timestamp + (spec.periods - 2) * spec.period_seconds,
        spec.start_timestamp + (spec.periods - 1) * spec.period_seconds,
    ]


def _run(
    corpus: SyntheticCorpus,
    spec: DriftSpec,
    config: TrainConfig,
    with_baseline: bool = True,
) -> PipelineResult:
    cuts = period_cut_points(spec)
    return run_pipeline(
        corpus.docs,
        config,
        classes=corpus.label_map.num_classes,
        mode="absolute" if cuts else "relative",
        cut_points=cuts,
        with_baseline=with_baseline,
    )


def probe_gap(
    result: PipelineResult,
    docs: Sequence[TimedDocument],
    seed: int,
) -> tuple[float, float]:
    """(acc_zx, acc_zs) of period probes over every trainable document."""
    kept = trainable(docs, result.vocab)
    encoded = encode_documents(kept, result.vocab)
    variant, shared = latent_means(result.fit.state, encoded.counts)
    periods = np.array([doc.period for doc in kept], dtype=np.int64)
    return probe_disentanglement(variant, shared, periods, seed=seed)


def disentanglement_study(
    spec: DriftSpec,
    config: TrainConfig,
    seeds: Sequence[int],
    regularized_lambda: float = 1.0,
) -> StudyResult:
    """Probe gap acc_zx - acc_zs with and without the IB regularizers.

    Both arms stop after stage 1; the unregularized arm trains with lambda 0.
    """
    study = StudyResult(name="disentanglement")
    logger.info("Disentanglement study started", extra={"seeds": len(seeds)})
    for seed in seeds:
        corpus = gen_corpus(spec.model_copy(update={"seed": seed}))
        row: dict[str, float] = {"seed": seed}
        for arm, lambda_ in (("ib", regularized_lambda), ("plain", 0.0)):
            arm_config = config.with_overrides(
                **{"seed": seed, "lambda": lambda_, "variant": "ib_ntm"}
            )
            result = _run(corpus, spec, arm_config, with_baseline=False)
            acc_zx, acc_zs = probe_gap(result, corpus.docs, seed)
            row[f"{arm}_acc_zx"] = acc_zx
            row[f"{arm}_acc_zs"] = acc_zs
            row[f"{arm}_gap"] = acc_zx - acc_zs
        study.rows.append(row)
        logger.info("Study seed complete", extra={"study": study.name, "seed": seed})
    study.compare("ib_gap", "plain_gap")
    logger.info(
        "Disentanglement study completed",
        extra={"mean_difference": study.mean_difference, "positive": study.positive},
    )
    return study


def adaptation_study(
    spec: DriftSpec,
    config: TrainConfig,
    seeds: Sequence[int],
) -> StudyResult:
    """Final-period test accuracy of the configured variant against the past-only baseline."""
    study = StudyResult(name="adaptation")
    logger.info("Adaptation study started", extra={"seeds": len(seeds)})
    for seed in seeds:
        corpus = gen_corpus(spec.model_copy(update={"seed": seed}))
        result = _run(corpus, spec, config.with_overrides(seed=seed))
        assert result.baseline_accuracy is not None
        study.rows.append(
            {
                "seed": seed,
                "accuracy": result.accuracy,
                "baseline_accuracy": result.baseline_accuracy,
            }
        )
        logger.info("Study seed complete", extra={"study": study.name, "seed": seed})
    study.compare("accuracy", "baseline_accuracy")
    logger.info(
        "Adaptation study completed",
        extra={"mean_difference": study.mean_difference, "positive": study.positive},
    )
    return study


def accuracy_vs_n(
    docs: Sequence[TimedDocument],
    config: TrainConfig,
    n_values: Sequence[int],
    classes: int | None = None,
    cut_points: Sequence[int] | None = None,
) -> list[tuple[int, float]]:
    """Test accuracy of full pipeline runs, one per retrieval depth N."""
    rows: list[tuple[int, float]] = []
    for depth in n_values:
        result = run_pipeline(
            docs,
            config.with_overrides(retrieval_depth=depth),
            classes=classes,
            mode="absolute" if cut_points else "relative",
            cut_points=cut_points,
            with_baseline=False,
        )
        rows.append((depth, result.accuracy))
        logger.info("Depth complete", extra={"depth": depth, "accuracy": result.accuracy})
    return rows


def scale_study(
    spec: DriftSpec,
    config: TrainConfig,
    seeds: Sequence[int],
    n_values: Sequence[int] = (10, 50),
) -> StudyResult:
    """Accuracy per retrieval depth; compares the smallest and largest depth."""
    study = StudyResult(name="scale")
    depths = sorted(set(n_values))
    logger.info("Scale study started", extra={"seeds": len(seeds), "depths": depths})
    for seed in seeds:
        corpus = gen_corpus(spec.model_copy(update={"seed": seed}))
        curve = accuracy_vs_n(
            corpus.docs,
            config.with_overrides(seed=seed),
            depths,
            classes=corpus.label_map.num_classes,
            cut_points=period_cut_points(spec),
        )
        row: dict[str, float] = {"seed": seed}
        row.update({f"accuracy_n{depth}": score for depth, score in curve})
        study.rows.append(row)
        logger.info("Study seed complete", extra={"study": study.name, "seed": seed})
    study.compare(f"accuracy_n{depths[0]}", f"accuracy_n{depths[-1]}")
    logger.info(
        "Scale study completed",
        extra={"mean_difference": study.mean_difference, "count": study.count},
    )
    return study
