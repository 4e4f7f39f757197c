"""Diagonal Gaussians: sampling, closed-form KL and its partial derivatives.

All functions accept a single vector (K,) or a batch (B, K); KL values are
summed over the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vibe.core.errors import ShapeMismatchError

LOG_STD_BOUND = 8.0


@dataclass(frozen=True)
class LatentGaussian:
    """Diagonal Gaussian with parameters (mean, log standard deviation)."""

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self) -> None:
        if self.mean.shape != self.log_std.shape:
            raise ShapeMismatchError(
                "mean and log_std must have the same shape.",
                {"mean": list(self.mean.shape), "log_std": list(self.log_std.shape)},
            )

    @property
    def dim(self) -> int:
        return int(self.mean.shape[-1])

    @classmethod
    def standard(cls, shape: int | tuple[int, ...]) -> LatentGaussian:
        """N(0, I) with the given shape; the prior of every latent."""
        return cls(np.zeros(shape), np.zeros(shape))

    def row(self, index: int) -> LatentGaussian:
        """One member of a batched Gaussian."""
        return LatentGaussian(self.mean[index].copy(), self.log_std[index].copy())


def clamp_log_std(log_std: np.ndarray) -> np.ndarray:
    return np.clip(log_std, -LOG_STD_BOUND, LOG_STD_BOUND)


def reparameterize(g: LatentGaussian, noise: np.ndarray) -> np.ndarray:
    """z = mean + exp(log_std) * noise.

    Raises:
        ShapeMismatchError: If `noise` does not match the Gaussian's shape.
    """
    if noise.shape != g.mean.shape:
        raise ShapeMismatchError(
            "noise must match the Gaussian's shape.",
            {"noise": list(noise.shape), "mean": list(g.mean.shape)},
        )
    return g.mean + np.exp(g.log_std) * noise


def kl_diag_gaussian(q: LatentGaussian, p: LatentGaussian) -> np.ndarray | float:
    """KL[q || p] for diagonal Gaussians, summed over coordinates.

    Returns a float for single vectors and an array of shape (B,) for batches.

    Raises:
        ShapeMismatchError: If `q` and `p` differ in dimension.
    """
    if q.mean.shape != p.mean.shape:
        raise ShapeMismatchError(
            "KL arguments must have equal dimensions.",
            {"q": list(q.mean.shape), "p": list(p.mean.shape)},
        )
    var_ratio = np.exp(2.0 * (q.log_std - p.log_std))
    mean_term = (q.mean - p.mean) ** 2 * np.exp(-2.0 * p.log_std)
    per_coord = p.log_std - q.log_std + 0.5 * (var_ratio + mean_term) - 0.5
    total = per_coord.sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def kl_diag_gaussian_grads(
    q: LatentGaussian,
    p: LatentGaussian,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Partial derivatives of KL[q || p] w.r.t. (q.mean, q.log_std, p.mean, p.log_std)."""
    inv_var_p = np.exp(-2.0 * p.log_std)
    diff = q.mean - p.mean
    var_ratio = np.exp(2.0 * q.log_std) * inv_var_p
    d_q_mean = diff * inv_var_p
    d_q_log_std = var_ratio - 1.0
    d_p_mean = -d_q_mean
    d_p_log_std = 1.0 - var_ratio - diff**2 * inv_var_p
    return d_q_mean, d_q_log_std, d_p_mean, d_p_log_std


def kl_standard_normal(q: LatentGaussian) -> np.ndarray | float:
    """KL[q || N(0, I)]."""
    per_coord = 0.5 * (q.mean**2 + np.exp(2.0 * q.log_std) - 1.0) - q.log_std
    total = per_coord.sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def kl_standard_normal_grads(q: LatentGaussian) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of KL[q || N(0, I)] w.r.t. (mean, log_std)."""
    return q.mean.copy(), np.exp(2.0 * q.log_std) - 1.0
