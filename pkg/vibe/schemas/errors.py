"""The one error shape every `vibe` command reports on stderr."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, ConfigDict, Field


class ErrorResponse(BaseModel):
    """Failure payload, written as a single JSON line.

    Attributes:
        error_code: Stable identifier scripts can branch on, e.g.
            `bad-checkpoint` or `internal_error`.
        message: Human-readable summary; never a traceback.
        details: Structured context such as a file path, a line number or
            the offending cut points.
    """

    model_config = ConfigDict(frozen=True)

    error_code: str = Field(..., min_length=1, pattern=r"^[a-z][a-z_-]*$")
    message: str = Field(..., min_length=1)
    details: Any | None = None

    def to_line(self) -> str:
        return self.model_dump_json() + "\n"

    @classmethod
    def from_line(cls, line: str) -> ErrorResponse:
        """Parse a line written by `to_line`."""
        return cls.model_validate_json(line)
