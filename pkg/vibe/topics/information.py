"""Exact information quantities over discrete joint tables, in bits.

Used to check the identities the regularizers rest on: interaction
information I(X;Y;Z) = I(X;Z) - I(X;Z|Y) = I(X;Y) - I(X;Y|Z). It can be
negative (e.g. Z = X xor Y).
"""

from __future__ import annotations

import numpy as np
from scipy.stats import entropy

from vibe.core.errors import InvalidInputError

NORMALIZATION_TOL = 1e-9
AGREEMENT_TOL = 1e-12


def _check_joint(joint: np.ndarray) -> np.ndarray:
    table = np.asarray(joint, dtype=np.float64)
    if table.ndim != 3:
        raise InvalidInputError("Joint table must be 3-dimensional.", {"ndim": table.ndim})
    if np.any(table < 0) or not np.all(np.isfinite(table)):
        raise InvalidInputError("Joint table entries must be finite and non-negative.")
    total = float(table.sum())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise InvalidInputError("Joint table must sum to 1.", {"sum": total})
    return table


def _h(table: np.ndarray, keep: tuple[int, ...]) -> float:
    """Joint entropy of the axes in `keep`."""
    drop = tuple(axis for axis in range(3) if axis not in keep)
    marginal = table.sum(axis=drop) if drop else table
    return float(entropy(marginal.ravel(), base=2))


def mutual_information(joint: np.ndarray, a: int, b: int) -> float:
    """I(A;B) between two axes of a normalised 3-way table."""
    table = _check_joint(joint)
    return _h(table, (a,)) + _h(table, (b,)) - _h(table, tuple(sorted((a, b))))


def conditional_mutual_information(joint: np.ndarray, a: int, b: int, given: int) -> float:
    """I(A;B|C) between two axes given the third."""
    table = _check_joint(joint)
    return (
        _h(table, tuple(sorted((a, given))))
        + _h(table, tuple(sorted((b, given))))
        - _h(table, (given,))
        - _h(table, (0, 1, 2))
    )


def interaction_information_discrete(joint: np.ndarray) -> float:
    """I(X;Y;Z) for a table indexed [x, y, z].

    Both decompositions are evaluated by enumeration and must agree.

    Raises:
        InvalidInputError: If the table is not a normalised 3-way distribution.
    """
    table = _check_joint(joint)
    via_z = mutual_information(table, 0, 2) - conditional_mutual_information(table, 0, 2, 1)
    via_y = mutual_information(table, 0, 1) - conditional_mutual_information(table, 0, 1, 2)
    if abs(via_z - via_y) > AGREEMENT_TOL:
        raise ArithmeticError(
            f"Interaction information forms disagree: {via_z!r} vs {via_y!r}"
        )
    return via_z
