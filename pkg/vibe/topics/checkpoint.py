"""Binary checkpoints.

Layout: the ASCII header `VIBE1`, six little-endian int64 dimensions
(V, K, hidden, C, T, E), then every tensor of `ModelState.parameters()`
in declaration order as little-endian float64. Precomputed embeddings are
not part of a checkpoint.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from vibe.core.errors import CheckpointError
from vibe.topics.state import ModelState

logger = logging.getLogger(__name__)

MAGIC = b"VIBE1"
_DIMS = np.dtype("<i8")
_VALUES = np.dtype("<f8")


def state_to_bytes(state: ModelState) -> bytes:
    parts = [MAGIC, np.asarray(state.dims, dtype=_DIMS).tobytes()]
    parts.extend(
        np.ascontiguousarray(array, dtype=_VALUES).tobytes()
        for array in state.parameters().values()
    )
    return b"".join(parts)


def state_from_bytes(payload: bytes) -> ModelState:
    """Rebuild a state from `state_to_bytes` output.

    Raises:
        CheckpointError: On a wrong header, bad dimensions or a body of the
            wrong length.
    """
    if not payload.startswith(MAGIC):
        raise CheckpointError("Checkpoint header is not VIBE1.")
    offset = len(MAGIC)
    dims_end = offset + 6 * _DIMS.itemsize
    if len(payload) < dims_end:
        raise CheckpointError("Checkpoint is truncated inside the dimension block.")
    dims = np.frombuffer(payload[offset:dims_end], dtype=_DIMS)
    vocab_size, n_topics, hidden, classes, time_buckets, embed_dim = (int(d) for d in dims)
    if min(vocab_size, n_topics, hidden, classes, time_buckets, embed_dim) < 1:
        raise CheckpointError("Checkpoint dimensions must be positive.", {"dims": dims.tolist()})

    # Shapes come from a freshly allocated state; values are overwritten.
    state = ModelState.create(
        np.random.default_rng(0), vocab_size, n_topics, hidden, classes, time_buckets, embed_dim
    )
    params = state.parameters()
    expected = dims_end + sum(a.size for a in params.values()) * _VALUES.itemsize
    if len(payload) != expected:
        raise CheckpointError(
            "Checkpoint body has the wrong length.",
            {"bytes": len(payload), "expected": expected},
        )
    position = dims_end
    for array in params.values():
        size = array.size * _VALUES.itemsize
        array[...] = np.frombuffer(payload[position : position + size], dtype=_VALUES).reshape(
            array.shape
        )
        position += size
    return state


def save_checkpoint(state: ModelState, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(state_to_bytes(state))
    logger.info("Checkpoint saved", extra={"path": str(path), "dims": list(state.dims)})


def load_checkpoint(path: Path) -> ModelState:
    """Read a checkpoint file.

    Raises:
        CheckpointError: If the file is missing or malformed.
    """
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}", {"path": str(path)})
    return state_from_bytes(path.read_bytes())
