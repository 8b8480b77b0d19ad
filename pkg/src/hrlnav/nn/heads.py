"""Action heads: categorical over classes and diagonal Gaussian with a std floor."""

from __future__ import annotations

import math

import numpy as np

from .layers import Dense, Module
from .autograd import Tensor, exp, gather, get_default_dtype, log, log_softmax, maximum, parameter

__all__ = [
    "CategoricalHead",
    "GaussianHead",
    "categorical_sample_logprob",
    "gaussian_logprob_entropy",
    "LOG_SQRT_2PI",
]

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def _log_softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def categorical_sample_logprob(logits, rng: np.random.Generator):
    """Sample classes from ``softmax(logits)`` along the last axis.

    Returns ``(classes, log_prob, entropy)``; works on a single logit vector or
    a batch.  Max-subtraction keeps large logits finite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    logp = _log_softmax_np(logits)
    p = np.exp(logp)
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(logits.shape[:-1] + (1,))
    cls = np.minimum((u > cdf).sum(axis=-1), logits.shape[-1] - 1)
    chosen = np.take_along_axis(logp, np.expand_dims(cls, -1), axis=-1)[..., 0]
    ent = -(p * logp).sum(axis=-1)
    return cls, chosen, ent


def gaussian_logprob_entropy(mean, std, sample):
    """Diagonal Gaussian log-density of ``sample`` and entropy, summed over the last axis."""
    mean, std, sample = (np.asarray(a, dtype=np.float64) for a in (mean, std, sample))
    z = (sample - mean) / std
    logp = np.sum(-0.5 * z * z - np.log(std) - LOG_SQRT_2PI, axis=-1)
    ent = np.sum(0.5 + LOG_SQRT_2PI + np.log(std) * np.ones_like(mean), axis=-1)
    return logp, ent


class CategoricalHead(Module):
    def __init__(self, n_in: int, n_classes: int, rng: np.random.Generator, dtype=None):
        self.linear = Dense(n_in, n_classes, rng, gain=0.01, dtype=dtype)
        self.n = n_classes

    def __call__(self, features: Tensor) -> Tensor:
        return self.linear(features)

    def log_prob(self, logits: Tensor, actions) -> Tensor:
        return gather(log_softmax(logits), np.asarray(actions).reshape(-1))

    def entropy(self, logits: Tensor) -> Tensor:
        logp = log_softmax(logits)
        return -(exp(logp) * logp).sum(axis=-1)

    def sample(self, logits: np.ndarray, rng: np.random.Generator, deterministic: bool = False):
        if deterministic:
            cls = np.argmax(logits, axis=-1)
            logp = np.take_along_axis(_log_softmax_np(logits), cls[..., None], axis=-1)[..., 0]
            return cls, logp
        cls, logp, _ = categorical_sample_logprob(logits, rng)
        return cls, logp


class GaussianHead(Module):
    """Mean from a linear layer, state-independent learnable log-std.

    The effective std is ``max(exp(log_std), min_std)`` per dimension.
    """

    def __init__(self, n_in: int, dim: int, rng: np.random.Generator, init_std, min_std, dtype=None):
        dtype = dtype or get_default_dtype()
        self.linear = Dense(n_in, dim, rng, gain=0.01, dtype=dtype)
        self.log_std = parameter(np.log(np.broadcast_to(np.asarray(init_std, dtype=np.float64), (dim,))), dtype)
        self.min_std = np.broadcast_to(np.asarray(min_std, dtype=dtype), (dim,)).copy()
        self.dim = dim

    def __call__(self, features: Tensor) -> Tensor:
        return self.linear(features)

    def std(self) -> Tensor:
        return maximum(exp(self.log_std), Tensor(self.min_std))

    def std_numpy(self) -> np.ndarray:
        return np.maximum(np.exp(self.log_std.data), self.min_std)

    def log_prob(self, mean: Tensor, sample) -> Tensor:
        std = self.std()
        z = (Tensor(np.asarray(sample, dtype=mean.dtype)) - mean) / std
        return (z * z * -0.5 - log(std) - LOG_SQRT_2PI).sum(axis=-1)

    def entropy(self, mean: Tensor) -> Tensor:
        ent = (log(self.std()) + (0.5 + LOG_SQRT_2PI)).sum()
        ones = Tensor(np.ones(mean.shape[0], dtype=mean.dtype))
        return ones * ent

    def sample(self, mean: np.ndarray, rng: np.random.Generator, deterministic: bool = False):
        std = self.std_numpy()
        x = mean if deterministic else mean + std * rng.standard_normal(mean.shape)
        logp, _ = gaussian_logprob_entropy(mean, std, x)
        return x, logp
