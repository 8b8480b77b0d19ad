"""Adam and global gradient-norm clipping."""

from __future__ import annotations

import dataclasses

import numpy as np

from .autograd import Tensor

__all__ = ["AdamState", "adam_step", "Adam", "clip_grad_norm", "global_norm"]


@dataclasses.dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-5

    @classmethod
    def zeros_like(cls, params, **kwargs) -> AdamState:
        arrays = [p.data if isinstance(p, Tensor) else np.asarray(p) for p in params]
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kwargs)


def adam_step(params, grads, state: AdamState) -> list[np.ndarray]:
    """One bias-corrected Adam update.

    ``params`` may be tensors (updated in place) or arrays; the new parameter
    arrays are returned either way.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must have equal length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        data = p.data if isinstance(p, Tensor) else np.asarray(p)
        if g.shape != data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {data.shape}")
        m = state.m[i] = b1 * state.m[i] + (1 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        new = data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new = new.astype(data.dtype, copy=False)
        if isinstance(p, Tensor):
            p.data = new
        out.append(new)
    return out


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-5):
        self.params = list(params)
        self.state = AdamState.zeros_like(self.params, lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = float(value)

    def step(self, grads) -> None:
        adam_step(self.params, grads, self.state)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def clip_grad_norm(grads, max_norm: float):
    """Scale all gradients by ``max_norm / norm`` when the global L2 norm exceeds it.

    Returns ``(grads, norm_before_clipping)``.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * np.asarray(scale, dtype=g.dtype) for g in grads]
    return grads, norm
