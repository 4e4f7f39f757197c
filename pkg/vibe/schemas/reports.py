"""Schemas for evaluation reports and training histories."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field, field_validator


class ClassScores(BaseModel):
    """Precision and recall of one class."""

    label: int = Field(..., ge=0)
    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    support: int = Field(..., ge=0)


class CurvePoint(BaseModel):
    """Accuracy at one retrieval depth N."""

    n: int = Field(..., ge=1)
    accuracy: float = Field(..., ge=0.0, le=1.0)


class EvalReport(BaseModel):
    """Everything `vibe report` writes, parsed back without loss.

    Attributes:
        accuracy: Test accuracy of the evaluated variant.
        per_class: Per-class precision and recall.
        mmd_scores: Named distribution-shift scores.
        vocab_overlaps: Named top-k vocabulary overlaps (percent).
        baseline_accuracy: Past-only baseline accuracy on the same test set.
        retriever_accuracies: Accuracy per retrieval scheme.
        accuracy_vs_n: Accuracy per retrieval depth.
        config: Training configuration snapshot.
        seeds: Seeds the numbers were produced with.
        variant: Pipeline variant.
    """

    accuracy: float = Field(..., ge=0.0, le=1.0)
    per_class: list[ClassScores] = Field(default_factory=list)
    mmd_scores: dict[str, float] = Field(default_factory=dict)
    vocab_overlaps: dict[str, float] = Field(default_factory=dict)
    baseline_accuracy: float | None = Field(default=None, ge=0.0, le=1.0)
    retriever_accuracies: dict[str, float] = Field(default_factory=dict)
    accuracy_vs_n: list[CurvePoint] = Field(default_factory=list)
    config: dict[str, Any] = Field(default_factory=dict)
    seeds: list[int] = Field(default_factory=list)
    variant: str = "vibe"

    @field_validator("mmd_scores")
    @classmethod
    def check_mmd(cls, value: dict[str, float]) -> dict[str, float]:
        for name, score in value.items():
            if score < -1e-9:
                raise ValueError(f"MMD score {name} is negative: {score}")
        return value

    @field_validator("vocab_overlaps")
    @classmethod
    def check_overlaps(cls, value: dict[str, float]) -> dict[str, float]:
        for name, overlap in value.items():
            if not 0.0 <= overlap <= 100.0:
                raise ValueError(f"Overlap {name} is outside [0, 100]: {overlap}")
        return value
