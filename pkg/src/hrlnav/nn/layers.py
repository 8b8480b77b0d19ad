"""Parameterised layers: dense, 2-D convolution and GRU."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, conv2d, get_default_dtype, gru_sequence, matmul, parameter

__all__ = ["Module", "Dense", "Conv2d", "GRU", "orthogonal"]


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix of ``shape`` scaled by ``gain`` (Saxe et al. init)."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Module:
    """Container that discovers parameters from its attributes.

    Parameters are leaf tensors with ``requires_grad``; sub-modules and lists
    of sub-modules are walked recursively in attribute order, so names are
    stable and checkpoints are portable.
    """

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[full] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(full + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{full}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype).copy()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = np.sqrt(2), dtype=None):
        dtype = dtype or get_default_dtype()
        self.weight = parameter(orthogonal((n_in, n_out), gain, rng), dtype)
        self.bias = parameter(np.zeros(n_out), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"Dense expects last dim {self.weight.shape[0]}, got {x.shape}")
        return matmul(x, self.weight) + self.bias


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        kernel: int = 3,
        stride: int = 1,
        padding: int = 1,
        gain: float = np.sqrt(2),
        dtype=None,
    ):
        dtype = dtype or get_default_dtype()
        w = orthogonal((c_out, c_in * kernel * kernel), gain, rng).reshape(c_out, c_in, kernel, kernel)
        self.weight = parameter(w, dtype)
        self.bias = parameter(np.zeros(c_out), dtype)
        self.stride = stride
        self.padding = padding

    def out_size(self, size: int) -> int:
        k = self.weight.shape[-1]
        return (size + 2 * self.padding - k) // self.stride + 1

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class GRU(Module):
    """Single-layer GRU; weights stored as ``(in, 3H)`` and ``(H, 3H)`` in r, z, n order."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, dtype=None):
        dtype = dtype or get_default_dtype()
        w_ih = np.concatenate([orthogonal((n_in, hidden), 1.0, rng) for _ in range(3)], axis=1)
        w_hh = np.concatenate([orthogonal((hidden, hidden), 1.0, rng) for _ in range(3)], axis=1)
        self.w_ih = parameter(w_ih, dtype)
        self.w_hh = parameter(w_hh, dtype)
        self.b_ih = parameter(np.zeros(3 * hidden), dtype)
        self.b_hh = parameter(np.zeros(3 * hidden), dtype)
        self.hidden = hidden

    def __call__(self, x: Tensor, h0, masks) -> Tensor:
        """``x``: ``(T, B, I)``; ``h0``: ``(B, H)``; ``masks``: ``(T, B)``."""
        h0 = h0 if isinstance(h0, Tensor) else Tensor(np.asarray(h0, dtype=self.w_hh.dtype))
        return gru_sequence(x, h0, masks, self.w_ih, self.w_hh, self.b_ih, self.b_hh)
