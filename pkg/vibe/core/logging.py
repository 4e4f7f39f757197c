"""Process-wide logging for the CLI and benchmark jobs.

Library modules log through `logging.getLogger(__name__)` and pass run
counters (epoch, loss, pairs, seed, ...) via `extra`. The formatter set up
here appends those counters to the message as sorted `key=value` pairs,
so a training log reads:

    2024-05-01 10:00:00,000 INFO vibe.services.training Epoch complete epoch=3 loss=412.7
"""

from __future__ import annotations

import logging

from vibe.core.settings import Settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"

# Attributes every LogRecord carries; anything else came from `extra`.
_RECORD_FIELDS = frozenset(
    vars(logging.LogRecord("", logging.INFO, "", 0, "", None, None))
) | {"message", "asctime", "taskName"}


def record_counters(record: logging.LogRecord) -> dict[str, object]:
    """The `extra` fields attached to `record`."""
    return {
        key: value for key, value in vars(record).items() if key not in _RECORD_FIELDS
    }


class CounterFormatter(logging.Formatter):
    """Formatter that renders `extra` counters after the message."""

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        counters = record_counters(record)
        if not counters:
            return line
        cells = " ".join(f"{key}={_render(value)}" for key, value in sorted(counters.items()))
        return f"{line} {cells}"


def _render(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def configure_logging(settings: Settings) -> None:
    """Configure root logging for one process.

    Re-configuring replaces earlier handlers, so a `--log-level` override
    takes effect even after a previous call. Python warnings (for example
    scikit-learn convergence warnings) are routed through logging.

    Args:
        settings: The settings controlling log verbosity.
    """
    handler = logging.StreamHandler()
    handler.setFormatter(CounterFormatter(LOG_FORMAT))
    logging.basicConfig(level=settings.log_level, handlers=[handler], force=True)
    logging.captureWarnings(True)
