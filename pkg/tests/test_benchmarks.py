"""Tests for the synthetic benchmark studies.

Full studies train several models and are marked slow.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from vibe.schemas.config import DriftSpec, TrainConfig
from vibe.workers.benchmarks import (
    StudyResult,
    accuracy_vs_n,
    adaptation_study,
    disentanglement_study,
    period_cut_points,
    scale_study,
)


def test_period_cut_points_isolate_last_two_periods(small_spec):
    start, length = small_spec.start_timestamp, small_spec.period_seconds
    assert period_cut_points(small_spec) == [start + length, start + 2 * length]


def test_period_cut_points_need_three_periods(small_spec):
    assert period_cut_points(small_spec.model_copy(update={"periods": 2})) is None


def test_study_result_compare_and_write(tmp_path: Path):
    study = StudyResult(
        name="demo",
        rows=[
            {"seed": 0, "a": 0.9, "b": 0.7},
            {"seed": 1, "a": 0.6, "b": 0.8},
            {"seed": 2, "a": 0.8, "b": 0.5},
        ],
    )
    study.compare("a", "b")

    assert study.compared == ("a", "b")
    assert study.mean_difference == pytest.approx((0.2 - 0.2 + 0.3) / 3)
    assert study.positive == 2
    assert study.count == 3

    study.write(tmp_path / "demo.csv")
    lines = (tmp_path / "demo.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "seed,a,b"
    assert len(lines) == 4


@pytest.mark.slow
def test_disentanglement_study_rows(small_spec, small_config):
    study = disentanglement_study(small_spec, small_config, seeds=[0, 1])
    assert study.count == 2
    assert study.compared == ("ib_gap", "plain_gap")
    for row in study.rows:
        for arm in ("ib", "plain"):
            assert 0.0 <= row[f"{arm}_acc_zx"] <= 1.0
            assert row[f"{arm}_gap"] == pytest.approx(
                row[f"{arm}_acc_zx"] - row[f"{arm}_acc_zs"]
            )


@pytest.mark.slow
def test_adaptation_study_rows(small_spec, small_config):
    study = adaptation_study(small_spec, small_config, seeds=[0])
    assert [row["seed"] for row in study.rows] == [0]
    assert study.compared == ("accuracy", "baseline_accuracy")


@pytest.mark.slow
def test_scale_study_compares_extreme_depths(small_spec, small_config):
    study = scale_study(small_spec, small_config, seeds=[0], n_values=(3, 1, 2))
    assert set(study.rows[0]) == {"seed", "accuracy_n1", "accuracy_n2", "accuracy_n3"}
    assert study.compared == ("accuracy_n1", "accuracy_n3")


@pytest.mark.slow
def test_accuracy_vs_n_one_point_per_depth(toy_docs, small_config):
    curve = accuracy_vs_n(toy_docs, small_config, [1, 2])
    assert [depth for depth, _score in curve] == [1, 2]
    assert all(0.0 <= score <= 1.0 for _depth, score in curve)


ACCEPTANCE_CONFIG = TrainConfig(
    n_topics=16,
    hidden=128,
    embed_dim=32,
    batch_size=64,
    learning_rate=2e-3,
    warmup_epochs=2,
    stage1_epochs=10,
    stage2_epochs=10,
)


@pytest.mark.slow
def test_regularizers_widen_the_period_gap_on_every_seed():
    """On the default corpus, lambda = 1 beats lambda = 0 on all five seed pairs."""
    study = disentanglement_study(DriftSpec(), ACCEPTANCE_CONFIG, seeds=range(5))

    assert study.count == 5
    assert all(row["ib_gap"] > row["plain_gap"] for row in study.rows)
    assert study.mean_difference > 0.0


@pytest.mark.slow
def test_adaptation_beats_past_only_baseline():
    """Under correlated drift the full pipeline gains two points on 8 of 10 seeds."""
    spec = DriftSpec(mix_shared=0.5, label_topic_correlation=0.8)
    study = adaptation_study(spec, ACCEPTANCE_CONFIG, seeds=range(10))

    assert study.count == 10
    assert study.mean_difference >= 0.02
    assert study.positive >= 8


@pytest.mark.slow
def test_accuracy_barely_depends_on_retrieval_depth():
    """Depth 10 and depth 50 agree within 1.5 points on average over five seeds."""
    study = scale_study(DriftSpec(), ACCEPTANCE_CONFIG, seeds=range(5), n_values=(10, 50))

    assert study.compared == ("accuracy_n10", "accuracy_n50")
    assert abs(study.mean_difference) <= 0.015
