"""The pair ELBO, the IB-regularized objective, and their exact gradients.

Semantics
---------
- All terms are means over the pairs of a batch; reconstruction terms are
  additionally averaged over noise draws.
- elbo = recon_x + recon_y - kl_x - kl_y - kl_s_prior
- objective = (1 + lambda) * elbo + lambda * kl_s_prior
  - lambda * (kl_s_rx + kl_s_ry)
- Training minimises -objective. The net weight on kl_s_prior is therefore
  +1, the weight on each variant KL and reconstruction is (1 + lambda) and
  the weight on each approximator KL is lambda.
- One draw of z^s per noise draw feeds both decoders.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import softmax

from vibe.core.errors import InvalidInputError, ShapeMismatchError
from vibe.text.bow import BowVector, bows_to_dense
from vibe.topics.gaussian import (
    LatentGaussian,
    kl_diag_gaussian,
    kl_diag_gaussian_grads,
    kl_standard_normal,
    kl_standard_normal_grads,
)
from vibe.topics.layers import DecoderCache, EncoderCache, Grads, softmax_backward
from vibe.topics.model import LOG_EPS, VibeModel


@dataclass(frozen=True)
class LossBreakdown:
    """Every term of one objective evaluation.

    Attributes:
        recon_x: Expected log-likelihood of the past documents.
        recon_y: Expected log-likelihood of the future documents.
        kl_x: KL[q(z^x|t^x) || p(z^x)].
        kl_y: KL[q(z^y|t^y) || p(z^y)].
        kl_s_prior: KL[q(z^s|t^x,t^y) || p(z^s)].
        kl_s_rx: KL[q(z^s|t^x,t^y) || r^x(z^s|t^x)].
        kl_s_ry: KL[q(z^s|t^x,t^y) || r^y(z^s|t^y)].
        elbo: Assembled evidence lower bound.
        objective: Assembled regularized objective (maximised).
        lambda_: Regularizer weight used.
        mu: Weight of the topic-model loss in the joint loss.
        classification: Mean cross-entropy of the task head (0 when unused).
    """

    recon_x: float
    recon_y: float
    kl_x: float
    kl_y: float
    kl_s_prior: float
    kl_s_rx: float
    kl_s_ry: float
    elbo: float
    objective: float
    lambda_: float
    mu: float = 0.0
    classification: float = 0.0

    @property
    def ntm_loss(self) -> float:
        return -self.objective

    @property
    def joint_loss(self) -> float:
        return self.classification + self.mu * self.ntm_loss

    def with_classification(self, classification: float, mu: float) -> LossBreakdown:
        data = asdict(self)
        data.update(classification=classification, mu=mu)
        return LossBreakdown(**data)

    def as_row(self) -> dict[str, float]:
        row = asdict(self)
        row["joint_loss"] = self.joint_loss
        return row

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(list(self.as_row().values()))))


@dataclass(frozen=True)
class PairBatch:
    """Dense count matrices for B aligned (past, future) pairs."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        if self.x.shape != self.y.shape or self.x.ndim != 2:
            raise ShapeMismatchError(
                "Pair count matrices must both be (B, V).",
                {"x": list(self.x.shape), "y": list(self.y.shape)},
            )

    @property
    def size(self) -> int:
        return int(self.x.shape[0])

    @classmethod
    def from_bows(
        cls,
        bows_x: Sequence[BowVector],
        bows_y: Sequence[BowVector],
        vocab_size: int,
    ) -> PairBatch:
        return cls(bows_to_dense(bows_x, vocab_size), bows_to_dense(bows_y, vocab_size))

    def rows(self, index: np.ndarray) -> PairBatch:
        return PairBatch(self.x[index], self.y[index])


@dataclass(frozen=True)
class NoiseDraws:
    """Standard normal noise of shape (D, B, K) for each latent."""

    x: np.ndarray
    s: np.ndarray
    y: np.ndarray

    @property
    def draws(self) -> int:
        return int(self.x.shape[0])

    @classmethod
    def sample(
        cls, rng: np.random.Generator, draws: int, batch: int, n_topics: int
    ) -> NoiseDraws:
        shape = (draws, batch, n_topics)
        return cls(
            x=rng.standard_normal(shape),
            s=rng.standard_normal(shape),
            y=rng.standard_normal(shape),
        )

    @classmethod
    def zeros(cls, draws: int, batch: int, n_topics: int) -> NoiseDraws:
        shape = (draws, batch, n_topics)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))


@dataclass
class _DrawState:
    theta_x: np.ndarray
    theta_s: np.ndarray
    theta_y: np.ndarray
    dec_x: DecoderCache
    dec_y: DecoderCache


@dataclass
class _Forward:
    q_x: LatentGaussian
    q_s: LatentGaussian
    q_y: LatentGaussian
    r_x: LatentGaussian
    r_y: LatentGaussian
    caches: dict[str, EncoderCache]
    draws: list[_DrawState]
    breakdown: LossBreakdown


def _check_noise(noise: NoiseDraws, batch: PairBatch, model: VibeModel) -> None:
    expected = (noise.draws, batch.size, model.n_topics)
    for name in ("x", "s", "y"):
        if getattr(noise, name).shape != expected or noise.draws < 1:
            raise ShapeMismatchError(
                "Noise must be (D, B, K) with D >= 1 for every latent.",
                {"latent": name, "shape": list(getattr(noise, name).shape)},
            )


def _forward(
    batch: PairBatch,
    model: VibeModel,
    lambda_: float,
    noise: NoiseDraws,
) -> _Forward:
    if lambda_ < 0:
        raise InvalidInputError("lambda must be non-negative.", {"lambda": lambda_})
    _check_noise(noise, batch, model)

    q_x, cache_x = model.enc_x.forward(batch.x)
    q_y, cache_y = model.enc_y.forward(batch.y)
    q_s, cache_s = model.enc_s.forward(np.concatenate([batch.x, batch.y], axis=1))
    r_x, cache_rx = model.approx_x.forward(batch.x)
    r_y, cache_ry = model.approx_y.forward(batch.y)

    draws: list[_DrawState] = []
    recon_x = 0.0
    recon_y = 0.0
    for d in range(noise.draws):
        theta_x = softmax(q_x.mean + np.exp(q_x.log_std) * noise.x[d], axis=1)
        theta_s = softmax(q_s.mean + np.exp(q_s.log_std) * noise.s[d], axis=1)
        theta_y = softmax(q_y.mean + np.exp(q_y.log_std) * noise.y[d], axis=1)
        probs_x, dec_x = model.dec_x.forward(theta_x, theta_s)
        probs_y, dec_y = model.dec_y.forward(theta_y, theta_s)
        recon_x += float(np.sum(batch.x * np.log(probs_x + LOG_EPS)))
        recon_y += float(np.sum(batch.y * np.log(probs_y + LOG_EPS)))
        draws.append(_DrawState(theta_x, theta_s, theta_y, dec_x, dec_y))

    scale = 1.0 / (noise.draws * batch.size)
    recon_x *= scale
    recon_y *= scale
    kl_x = float(np.mean(kl_standard_normal(q_x)))
    kl_y = float(np.mean(kl_standard_normal(q_y)))
    kl_s_prior = float(np.mean(kl_standard_normal(q_s)))
    kl_s_rx = float(np.mean(kl_diag_gaussian(q_s, r_x)))
    kl_s_ry = float(np.mean(kl_diag_gaussian(q_s, r_y)))
    elbo = recon_x + recon_y - kl_x - kl_y - kl_s_prior
    if lambda_ == 0:
        objective = elbo
    else:
        objective = (1.0 + lambda_) * elbo + lambda_ * kl_s_prior - lambda_ * (kl_s_rx + kl_s_ry)

    breakdown = LossBreakdown(
        recon_x=recon_x,
        recon_y=recon_y,
        kl_x=kl_x,
        kl_y=kl_y,
        kl_s_prior=kl_s_prior,
        kl_s_rx=kl_s_rx,
        kl_s_ry=kl_s_ry,
        elbo=elbo,
        objective=objective,
        lambda_=lambda_,
    )
    caches = {
        "enc_x": cache_x,
        "enc_y": cache_y,
        "enc_s": cache_s,
        "approx_x": cache_rx,
        "approx_y": cache_ry,
    }
    return _Forward(q_x, q_s, q_y, r_x, r_y, caches, draws, breakdown)


def elbo_pair(batch: PairBatch, model: VibeModel, noise: NoiseDraws) -> LossBreakdown:
    """Evaluate the pair ELBO (the objective at lambda = 0)."""
    return _forward(batch, model, 0.0, noise).breakdown


def vibe_objective(
    batch: PairBatch,
    model: VibeModel,
    lambda_: float,
    noise: NoiseDraws,
) -> LossBreakdown:
    """Evaluate the regularized objective.

    Raises:
        InvalidInputError: If `lambda_` is negative.
        ShapeMismatchError: If `noise` does not match the batch.
    """
    return _forward(batch, model, lambda_, noise).breakdown


def backward(
    batch: PairBatch,
    model: VibeModel,
    lambda_: float,
    noise: NoiseDraws,
    scale: float = 1.0,
) -> tuple[LossBreakdown, Grads]:
    """Gradients of `scale * (-objective)` w.r.t. every model parameter.

    Args:
        batch: Pair counts.
        model: Parameters to differentiate.
        lambda_: Regularizer weight.
        noise: Fixed reparameterization noise.
        scale: Multiplier on the loss (mu inside the joint loss).

    Returns:
        tuple[LossBreakdown, Grads]: Forward values and gradients keyed like
        `model.parameters()`.
    """
    state = _forward(batch, model, lambda_, noise)
    n_pairs = batch.size
    coeff_elbo = scale * (1.0 + lambda_)
    coeff_prior = scale * 1.0
    coeff_approx = scale * lambda_

    grads: Grads = {name: np.zeros_like(array) for name, array in model.parameters().items()}

    def accumulate(prefix: str, block_grads: Grads) -> None:
        for name, value in block_grads.items():
            grads[f"{prefix}.{name}"] += value

    q_x, q_s, q_y = state.q_x, state.q_s, state.q_y
    d_mean = {key: np.zeros_like(q_x.mean) for key in ("x", "s", "y", "rx", "ry")}
    d_log_std = {key: np.zeros_like(q_x.mean) for key in ("x", "s", "y", "rx", "ry")}

    # Reconstruction terms through every noise draw.
    recon_coeff = -coeff_elbo / (noise.draws * n_pairs)
    std = {"x": np.exp(q_x.log_std), "s": np.exp(q_s.log_std), "y": np.exp(q_y.log_std)}
    for d, draw in enumerate(state.draws):
        d_theta_s = np.zeros_like(draw.theta_s)
        for side, counts, decoder, cache, theta_v, eps_v in (
            ("x", batch.x, model.dec_x, draw.dec_x, draw.theta_x, noise.x[d]),
            ("y", batch.y, model.dec_y, draw.dec_y, draw.theta_y, noise.y[d]),
        ):
            d_probs = recon_coeff * counts / (cache.probs + LOG_EPS)
            d_logits = softmax_backward(cache.probs, d_probs)
            dec_grads, d_theta_v, d_theta_shared = decoder.backward(cache, d_logits)
            accumulate(f"dec_{side}", dec_grads)
            d_theta_s += d_theta_shared
            d_z = softmax_backward(theta_v, d_theta_v)
            d_mean[side] += d_z
            d_log_std[side] += d_z * std[side] * eps_v
        d_z_s = softmax_backward(draw.theta_s, d_theta_s)
        d_mean["s"] += d_z_s
        d_log_std["s"] += d_z_s * std["s"] * noise.s[d]

    # Prior KL terms.
    for key, q, coeff in (("x", q_x, coeff_elbo), ("y", q_y, coeff_elbo), ("s", q_s, coeff_prior)):
        g_mean, g_log_std = kl_standard_normal_grads(q)
        d_mean[key] += coeff / n_pairs * g_mean
        d_log_std[key] += coeff / n_pairs * g_log_std

    # Approximator KL terms.
    if coeff_approx != 0.0:
        for key, r in (("rx", state.r_x), ("ry", state.r_y)):
            dq_mean, dq_log_std, dr_mean, dr_log_std = kl_diag_gaussian_grads(q_s, r)
            weight = coeff_approx / n_pairs
            d_mean["s"] += weight * dq_mean
            d_log_std["s"] += weight * dq_log_std
            d_mean[key] += weight * dr_mean
            d_log_std[key] += weight * dr_log_std

    encoder_keys = {"enc_x": "x", "enc_y": "y", "enc_s": "s", "approx_x": "rx", "approx_y": "ry"}
    for prefix, key in encoder_keys.items():
        encoder = getattr(model, prefix)
        accumulate(prefix, encoder.backward(state.caches[prefix], d_mean[key], d_log_std[key]))

    return state.breakdown, grads
