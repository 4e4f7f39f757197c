"""Training and synthetic-benchmark configuration models.

A config file is plain `key=value` text. Values are strings until
validated here, so list-valued keys accept comma-separated numbers.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from vibe.core.errors import ConfigError


class TrainConfig(BaseModel):
    """Hyperparameters for both training stages and grid search.

    Attributes:
        seed: Single source of all randomness.
        batch_size: Pairs (stage 1) or documents (stage 2) per update.
        learning_rate: Adam step size.
        warmup_epochs: NTM-only epochs before joint stage-1 training.
        stage1_epochs: Joint NTM + classifier epochs.
        stage2_epochs: Sphere multi-task epochs.
        lambda_: IB regularizer weight (key `lambda`).
        mu: Weight of the NTM loss in the joint stage-1 loss.
        n_topics: Topics per latent variable (K).
        hidden: Hidden width of every MLP.
        embed_dim: Document embedding width (E).
        retrieval_depth: Future documents paired with each past document (N).
        retrieval_scheme: Lexical scoring used for pairing.
        time_buckets: Classes of the stage-2 time head (T).
        noise_draws: Reparameterization samples per latent per step.
        max_vocab: Vocabulary cap.
        stage2_update_all: Update NTM and embeddings during stage 2 too.
        variant: Full pipeline or one of the ablations.
        grid_lambda: Grid-search candidates for lambda.
        grid_mu: Grid-search candidates for mu.
        grid_learning_rate: Grid-search candidates for the learning rate.
        n_jobs: Parallel grid-search cells.
    """

    model_config = ConfigDict(populate_by_name=True, extra="forbid", frozen=True)

    seed: int = Field(default=0, ge=0)
    batch_size: int = Field(default=64, ge=1)
    learning_rate: float = Field(default=1e-3, ge=0.0)
    warmup_epochs: int = Field(default=1, ge=0)
    stage1_epochs: int = Field(default=10, ge=1)
    stage2_epochs: int = Field(default=10, ge=1)
    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")
    mu: float = Field(default=0.5, ge=0.0)
    n_topics: int = Field(default=128, ge=1)
    hidden: int = Field(default=2048, ge=1)
    embed_dim: int = Field(default=128, ge=1)
    retrieval_depth: int = Field(default=10, ge=1)
    retrieval_scheme: Literal["tfidf", "bm25"] = "tfidf"
    time_buckets: int = Field(default=2, ge=2)
    noise_draws: int = Field(default=1, ge=1)
    max_vocab: int = Field(default=20_000, ge=1)
    stage2_update_all: bool = False
    variant: Literal["vibe", "ib_ntm", "vanilla_ntm"] = "vibe"
    grid_lambda: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])
    grid_mu: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])
    grid_learning_rate: list[float] = Field(default_factory=lambda: [1e-3])
    n_jobs: int = Field(default=1, ge=1)

    @field_validator("grid_lambda", "grid_mu", "grid_learning_rate", mode="before")
    @classmethod
    def split_csv(cls, value: object) -> object:
        """Accept `0.1,0.5,1.0` strings for list-valued keys."""
        if isinstance(value, str):
            stripped = value.strip().strip("[]")
            return [item.strip() for item in stripped.split(",") if item.strip()]
        return value

    @property
    def effective_lambda(self) -> float:
        """Lambda actually used; the vanilla ablation trains the plain ELBO."""
        return 0.0 if self.variant == "vanilla_ntm" else self.lambda_

    def with_overrides(self, **overrides: Any) -> TrainConfig:
        """Return a validated copy with `overrides` applied."""
        data = self.model_dump(by_alias=True)
        data.update(overrides)
        return TrainConfig.model_validate(data)


class DriftSpec(BaseModel):
    """Parameters of the synthetic evolving corpus.

    Defaults describe a binary task over three periods.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    vocab_size: int = Field(default=500, ge=1)
    n_shared_topics: int = Field(default=2, ge=1)
    n_period_topics: int = Field(default=3, ge=1)
    periods: int = Field(default=3, ge=1)
    docs_per_period: int = Field(default=1000, ge=1)
    doc_length: tuple[int, int] = (20, 40)
    mix_shared: float = Field(default=0.5, gt=0.0, le=1.0)
    topic_sharpness: float = Field(default=10.0, gt=0.0)
    label_topic_correlation: float = Field(default=0.0, ge=0.0, lt=1.0)
    period_seconds: int = Field(default=30 * 24 * 3600, ge=1)
    start_timestamp: int = Field(default=1_577_836_800, ge=0)
    seed: int = Field(default=0, ge=0)

    @field_validator("doc_length", mode="before")
    @classmethod
    def parse_doc_length(cls, value: object) -> object:
        """Accept `20,40` or `20-40` strings from config files."""
        if isinstance(value, str):
            parts = value.replace("-", ",").split(",")
            return tuple(int(part) for part in parts if part.strip())
        return value

    @field_validator("doc_length")
    @classmethod
    def check_doc_length(cls, value: tuple[int, int]) -> tuple[int, int]:
        low, high = value
        if low < 1 or high < low:
            raise ValueError("doc_length must be a range 1 <= low <= high.")
        return value


def read_key_values(path: Path) -> dict[str, str]:
    """Read a `key=value` file; blank lines and `#` comments are ignored.

    Raises:
        ConfigError: If the file does not exist.
    """
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}", {"path": str(path)})
    values = dotenv_values(path)
    return {key.strip().lower(): value for key, value in values.items() if value is not None}


def load_train_config(
    path: Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> TrainConfig:
    """Build a TrainConfig from an optional file plus CLI overrides.

    CLI overrides win over file values; unset overrides (None) are ignored.

    Raises:
        ConfigError: For unknown keys or values that fail validation.
    """
    data: dict[str, Any] = read_key_values(path) if path is not None else {}
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})
    known = {field.alias or name for name, field in TrainConfig.model_fields.items()}
    unknown = sorted(set(data) - known - set(TrainConfig.model_fields))
    if unknown:
        raise ConfigError("Unknown config keys.", {"keys": unknown})
    try:
        return TrainConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(
            "Config values failed validation.",
            {"errors": exc.errors(include_url=False, include_context=False)},
        ) from exc


def load_drift_spec(
    path: Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> DriftSpec:
    """Build a DriftSpec from an optional `key=value` file plus overrides.

    Raises:
        ConfigError: For unknown keys or values that fail validation.
    """
    data: dict[str, Any] = read_key_values(path) if path is not None else {}
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})
    unknown = sorted(set(data) - set(DriftSpec.model_fields))
    if unknown:
        raise ConfigError("Unknown synthetic-corpus keys.", {"keys": unknown})
    try:
        return DriftSpec.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(
            "Synthetic-corpus values failed validation.",
            {"errors": exc.errors(include_url=False, include_context=False)},
        ) from exc
