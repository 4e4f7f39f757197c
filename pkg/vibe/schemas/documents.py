"""Schemas for documents, vocabularies, splits and retrieval pairs."""

from __future__ import annotations

from datetime import datetime
from datetime import timezone as _timezone
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator

UTC = _timezone.utc  # datetime.UTC alias (3.11+)


class DatasetRecord(BaseModel):
    """One line of a dataset file as written by users or `synth-gen`.

    Timestamps may be epoch seconds or ISO-8601 strings; both are
    normalised to integer UTC epoch seconds.
    """

    id: str = Field(..., min_length=1)
    text: str
    timestamp: int = Field(..., ge=0)
    label: str | None = None

    @field_validator("timestamp", mode="before")
    @classmethod
    def parse_timestamp(cls, value: object) -> object:
        """Accept ISO-8601 strings alongside integer epoch seconds."""
        if isinstance(value, str) and not value.strip().lstrip("-").isdigit():
            parsed = datetime.fromisoformat(value.strip().replace("Z", "+00:00"))
            if parsed.tzinfo is None:
                parsed = parsed.replace(tzinfo=UTC)
            return int(parsed.timestamp())
        return value


class TimedDocument(BaseModel):
    """Tokenized document with a timestamp and optional class label.

    Attributes:
        id: Stable document identifier.
        tokens: Lowercase tokens in reading order.
        timestamp: Epoch seconds.
        label: Class id in [0, C) when known.
        period: Period bucket assigned by splitting or generation.
    """

    model_config = ConfigDict(frozen=True)

    id: str
    tokens: tuple[str, ...]
    timestamp: int = Field(..., ge=0)
    label: int | None = Field(default=None, ge=0)
    period: int | None = Field(default=None, ge=0)


class Vocabulary(BaseModel):
    """Bijective word/id mapping; ids follow list order."""

    model_config = ConfigDict(frozen=True)

    words: tuple[str, ...]
    _word_to_id: dict[str, int] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: object) -> None:
        self._word_to_id = {word: idx for idx, word in enumerate(self.words)}
        if len(self._word_to_id) != len(self.words):
            raise ValueError("Vocabulary words must be unique.")

    @property
    def word_to_id(self) -> dict[str, int]:
        return self._word_to_id

    @property
    def id_to_word(self) -> tuple[str, ...]:
        return self.words

    @property
    def size(self) -> int:
        return len(self.words)


class LabelMap(BaseModel):
    """Label strings in class-id order (first-seen order in the dataset)."""

    labels: list[str] = Field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.labels)


class SplitSpec(BaseModel):
    """Temporal partition of a dataset into disjoint id lists."""

    train: list[str]
    validation: list[str]
    golden_adaptive: list[str]
    test: list[str]
    mode: Literal["relative", "absolute"]
    boundaries: list[int] = Field(default_factory=list)


class PairedSample(BaseModel):
    """A past training document paired with one retrieved future document."""

    model_config = ConfigDict(frozen=True)

    past: str
    future: str
    score: float
    degenerate: bool = False


class PseudoLabeledDoc(BaseModel):
    """Stage-1 prediction attached to an unlabeled future document."""

    model_config = ConfigDict(frozen=True)

    doc_id: str
    pseudo_label: int = Field(..., ge=0)
    confidence: float = Field(..., ge=0.0, le=1.0)


class GroundTruthRecord(BaseModel):
    """Planted structure of one synthetic document."""

    doc_id: str
    period: int = Field(..., ge=0)
    label: int = Field(..., ge=0)
    shared_weights: list[float]
    period_weights: list[float]
