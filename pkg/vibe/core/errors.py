"""Error types and standardized error reporting for the CLI.

Library code raises `VibeError` subclasses carrying a stable `error_code`.
The CLI turns every failure into the same `ErrorResponse` shape so scripts
driving the tool can branch on `error_code` without parsing messages.
"""

from __future__ import annotations

import logging
import sys
from typing import Any, TextIO

from pydantic import ValidationError

from vibe.schemas.errors import ErrorResponse

logger = logging.getLogger(__name__)

EXIT_USER_ERROR = 2
EXIT_INTERNAL_ERROR = 1


class VibeError(RuntimeError):
    """Base class for expected, user-reportable failures."""

    error_code = "vibe_error"

    def __init__(self, message: str, details: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details


class EmptyVocabularyError(VibeError):
    """Raised when no admissible word survives preprocessing."""

    error_code = "empty-vocabulary"


class BadBoundariesError(VibeError):
    """Raised when absolute split cut points are missing or not increasing."""

    error_code = "bad-boundaries"


class EmptyPoolError(VibeError):
    """Raised when a retrieval index is built over no documents."""

    error_code = "empty-pool"


class ShapeMismatchError(VibeError):
    """Raised when vector lengths or matrix dimensions disagree."""

    error_code = "shape-mismatch"


class InvalidInputError(VibeError):
    """Raised when an argument is outside its documented domain."""

    error_code = "invalid-input"


class ConfigError(VibeError):
    """Raised when a configuration file or override cannot be applied."""

    error_code = "invalid-config"


class CheckpointError(VibeError):
    """Raised when a checkpoint header or body is malformed."""

    error_code = "bad-checkpoint"


class DivergenceError(VibeError):
    """Raised when a training loss becomes non-finite.

    Attributes:
        last_state: The last parameter snapshot whose loss was finite.
    """

    error_code = "diverged"

    def __init__(
        self,
        message: str,
        last_state: Any = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, details)
        self.last_state = last_state


def _error_payload(
    error_code: str,
    message: str,
    details: Any | None = None,
) -> dict[str, Any]:
    """Build a standardized error payload."""
    return ErrorResponse(
        error_code=error_code,
        message=message,
        details=details,
    ).model_dump()


def render_error(exc: BaseException) -> tuple[dict[str, Any], int]:
    """Map an exception to the standard payload and a process exit status.

    Args:
        exc: The exception that terminated a command.

    Returns:
        tuple[dict[str, Any], int]: Error payload and exit status.
    """
    if isinstance(exc, VibeError):
        return _error_payload(exc.error_code, exc.message, exc.details), EXIT_USER_ERROR
    if isinstance(exc, ValidationError):
        payload = _error_payload(
            "validation_error",
            "Input validation failed.",
            exc.errors(include_url=False, include_context=False),
        )
        return payload, EXIT_USER_ERROR
    logger.exception("Unhandled exception", exc_info=exc)
    # Mask internals; the traceback is in the log.
    return _error_payload("internal_error", "Internal error."), EXIT_INTERNAL_ERROR


def report_error(exc: BaseException, stream: TextIO | None = None) -> int:
    """Write the error payload for `exc` as JSON and return the exit status."""
    payload, status = render_error(exc)
    target = stream if stream is not None else sys.stderr
    target.write(ErrorResponse.model_validate(payload).to_line())
    return status
