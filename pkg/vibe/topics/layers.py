"""Trainable building blocks with explicit forward and backward passes.

Each block owns named numpy arrays (`params()`, declaration order is the
checkpoint order) and returns a cache from `forward` that its `backward`
consumes. Backward methods return gradients keyed like `params()`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from vibe.topics.gaussian import LOG_STD_BOUND, LatentGaussian, clamp_log_std

Grads = dict[str, np.ndarray]


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def softmax_backward(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. softmax inputs given the gradient w.r.t. its outputs."""
    return probs * (d_probs - np.sum(d_probs * probs, axis=-1, keepdims=True))


def relu(values: np.ndarray) -> np.ndarray:
    return np.maximum(values, 0.0)


class Block:
    """Common parameter plumbing for the layers below."""

    names: tuple[str, ...] = ()

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.names}

    def zero_grads(self) -> Grads:
        return {name: np.zeros_like(getattr(self, name)) for name in self.names}


@dataclass
class EncoderCache:
    inputs: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    log_std_pre: np.ndarray


@dataclass(eq=False)
class GaussianEncoder(Block):
    """ReLU hidden layer followed by linear mean and log-std heads."""

    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_mean: np.ndarray
    b_mean: np.ndarray
    w_log_std: np.ndarray
    b_log_std: np.ndarray

    names = ("w_hidden", "b_hidden", "w_mean", "b_mean", "w_log_std", "b_log_std")

    @classmethod
    def create(
        cls, rng: np.random.Generator, n_in: int, hidden: int, n_topics: int
    ) -> GaussianEncoder:
        return cls(
            w_hidden=uniform_init(rng, n_in, (n_in, hidden)),
            b_hidden=uniform_init(rng, n_in, (hidden,)),
            w_mean=uniform_init(rng, hidden, (hidden, n_topics)),
            b_mean=uniform_init(rng, hidden, (n_topics,)),
            w_log_std=uniform_init(rng, hidden, (hidden, n_topics)),
            b_log_std=uniform_init(rng, hidden, (n_topics,)),
        )

    def forward(self, inputs: np.ndarray) -> tuple[LatentGaussian, EncoderCache]:
        hidden_pre = inputs @ self.w_hidden + self.b_hidden
        hidden = relu(hidden_pre)
        mean = hidden @ self.w_mean + self.b_mean
        log_std_pre = hidden @ self.w_log_std + self.b_log_std
        cache = EncoderCache(inputs, hidden_pre, hidden, log_std_pre)
        return LatentGaussian(mean, clamp_log_std(log_std_pre)), cache

    def backward(
        self, cache: EncoderCache, d_mean: np.ndarray, d_log_std: np.ndarray
    ) -> Grads:
        # The clamp passes gradient only strictly inside its bounds.
        inside = np.abs(cache.log_std_pre) < LOG_STD_BOUND
        d_log_std_pre = d_log_std * inside
        d_hidden = d_mean @ self.w_mean.T + d_log_std_pre @ self.w_log_std.T
        d_hidden_pre = d_hidden * (cache.hidden_pre > 0.0)
        return {
            "w_hidden": cache.inputs.T @ d_hidden_pre,
            "b_hidden": d_hidden_pre.sum(axis=0),
            "w_mean": cache.hidden.T @ d_mean,
            "b_mean": d_mean.sum(axis=0),
            "w_log_std": cache.hidden.T @ d_log_std_pre,
            "b_log_std": d_log_std_pre.sum(axis=0),
        }


@dataclass
class DecoderCache:
    inputs: np.ndarray
    probs: np.ndarray


@dataclass(eq=False)
class TopicDecoder(Block):
    """Linear map from [variant topics; shared topics] to word probabilities."""

    weight: np.ndarray
    bias: np.ndarray

    names = ("weight", "bias")

    @classmethod
    def create(
        cls, rng: np.random.Generator, n_topics: int, vocab_size: int
    ) -> TopicDecoder:
        fan_in = 2 * n_topics
        return cls(
            weight=uniform_init(rng, fan_in, (fan_in, vocab_size)),
            bias=uniform_init(rng, fan_in, (vocab_size,)),
        )

    def forward(
        self, theta_variant: np.ndarray, theta_shared: np.ndarray
    ) -> tuple[np.ndarray, DecoderCache]:
        inputs = np.concatenate([theta_variant, theta_shared], axis=-1)
        probs = softmax(inputs @ self.weight + self.bias, axis=-1)
        return probs, DecoderCache(inputs, probs)

    def backward(
        self, cache: DecoderCache, d_logits: np.ndarray
    ) -> tuple[Grads, np.ndarray, np.ndarray]:
        """Return parameter grads and grads w.r.t. both topic-mixture inputs."""
        d_inputs = d_logits @ self.weight.T
        n_topics = self.weight.shape[0] // 2
        grads = {
            "weight": cache.inputs.T @ d_logits,
            "bias": d_logits.sum(axis=0),
        }
        return grads, d_inputs[..., :n_topics], d_inputs[..., n_topics:]


@dataclass
class HeadCache:
    inputs: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray


@dataclass(eq=False)
class ClassifierHead(Block):
    """u = relu(W_mlp x + b_mlp); logits = W_out u + b_out."""

    w_mlp: np.ndarray
    b_mlp: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    names = ("w_mlp", "b_mlp", "w_out", "b_out")

    @classmethod
    def create(
        cls, rng: np.random.Generator, n_in: int, hidden: int, classes: int
    ) -> ClassifierHead:
        return cls(
            w_mlp=uniform_init(rng, n_in, (n_in, hidden)),
            b_mlp=uniform_init(rng, n_in, (hidden,)),
            w_out=uniform_init(rng, hidden, (hidden, classes)),
            b_out=uniform_init(rng, hidden, (classes,)),
        )

    @property
    def classes(self) -> int:
        return int(self.w_out.shape[1])

    def hidden_features(self, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        hidden_pre = inputs @ self.w_mlp + self.b_mlp
        return hidden_pre, relu(hidden_pre)

    def forward(self, inputs: np.ndarray) -> tuple[np.ndarray, HeadCache]:
        hidden_pre, hidden = self.hidden_features(inputs)
        logits = hidden @ self.w_out + self.b_out
        return logits, HeadCache(inputs, hidden_pre, hidden)

    def probabilities(self, inputs: np.ndarray) -> np.ndarray:
        """Softmax class probabilities for each input row."""
        return softmax(self.forward(inputs)[0], axis=-1)

    def backward(self, cache: HeadCache, d_logits: np.ndarray) -> tuple[Grads, np.ndarray]:
        """Return parameter grads and the grad w.r.t. the head's inputs."""
        d_hidden = d_logits @ self.w_out.T
        d_hidden_pre = d_hidden * (cache.hidden_pre > 0.0)
        grads = {
            "w_mlp": cache.inputs.T @ d_hidden_pre,
            "b_mlp": d_hidden_pre.sum(axis=0),
            "w_out": cache.hidden.T @ d_logits,
            "b_out": d_logits.sum(axis=0),
        }
        return grads, d_hidden_pre @ self.w_mlp.T


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. `logits`."""
    log_probs = log_softmax(logits, axis=-1)
    rows = np.arange(len(targets))
    loss = float(-np.mean(log_probs[rows, targets]))
    d_logits = np.exp(log_probs)
    d_logits[rows, targets] -= 1.0
    return loss, d_logits / len(targets)
