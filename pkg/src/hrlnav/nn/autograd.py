"""Reverse-mode automatic differentiation over numpy arrays.

Each differentiable operation returns a :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to parent gradients.
:func:`backward` orders the graph topologically (the "tape") and replays the
closures in reverse, visiting every node once.

The heavy layers used by the policies (convolution, GRU over a sequence) are
single fused nodes with hand-written gradients so that the Python overhead
stays small.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "no_grad",
    "precision",
    "get_default_dtype",
    "set_default_dtype",
    "check_finite",
    "tensor",
    "parameter",
    "build_tape",
    "backward",
    "matmul",
    "relu",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "concat",
    "maximum",
    "minimum",
    "clip",
    "log_softmax",
    "softmax",
    "gather",
    "conv2d",
    "gru_sequence",
]

_state = {"grad": True, "dtype": np.dtype(np.float32), "debug": False}


def get_default_dtype() -> np.dtype:
    return _state["dtype"]


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError("only float32 and float64 are supported")
    _state["dtype"] = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the default floating dtype."""
    old = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    old = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = old


@contextlib.contextmanager
def check_finite(enabled: bool = True):
    """Debug mode: raise ``FloatingPointError`` when an op produces NaN/Inf."""
    old = _state["debug"]
    _state["debug"] = enabled
    try:
        yield
    finally:
        _state["debug"] = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(_state["dtype"])
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op or 'leaf'})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other, self), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype or _state["dtype"])


def parameter(data, dtype=None) -> Tensor:
    return Tensor(np.array(data, dtype=dtype or _state["dtype"]), requires_grad=True)


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else _state["dtype"]
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if _state["debug"] and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    out = Tensor(data)
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out.op = op
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# graph traversal


def build_tape(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that need gradients, in topological order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> list[np.ndarray] | None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    If ``params`` is given, return their gradients in order; parameters not
    reachable from ``loss`` get zeros.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(build_tape(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            grads[key] = pg if key not in grads else grads[key] + pg
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


# ---------------------------------------------------------------------------
# elementwise and reductions


def add(a, b) -> Tensor:
    a = _wrap(a, b if isinstance(b, Tensor) else None)
    b = _wrap(b, a)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a = _wrap(a, b if isinstance(b, Tensor) else None)
    b = _wrap(b, a)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a = _wrap(a, b if isinstance(b, Tensor) else None)
    b = _wrap(b, a)
    ad, bd = a.data, b.data
    out = ad / bd
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
        "div",
    )


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return _make(ad**p, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)
    return _make(out, (a,), lambda g: (g * (out > 0),), "relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def maximum(a, b) -> Tensor:
    a = _wrap(a, b if isinstance(b, Tensor) else None)
    b = _wrap(b, a)
    pick_a = a.data >= b.data
    return _make(
        np.where(pick_a, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
        "maximum",
    )


def minimum(a, b) -> Tensor:
    a = _wrap(a, b if isinstance(b, Tensor) else None)
    b = _wrap(b, a)
    pick_a = a.data <= b.data
    return _make(
        np.where(pick_a, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
        "minimum",
    )


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw, "sum")


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def index(a: Tensor, idx) -> Tensor:
    shape = a.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx, g)
        return (full,)

    return _make(a.data[idx], (a,), bw, "index")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
        "concat",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(
        ad @ bd,
        (a, b),
        lambda g: (g @ bd.T if a.requires_grad else None, ad.T @ g if b.requires_grad else None),
        "matmul",
    )


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    p = np.exp(out)
    return _make(out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    return exp(log_softmax(a, axis))


def gather(a: Tensor, idx: np.ndarray) -> Tensor:
    """``a[i, idx[i]]`` for a 2-D tensor."""
    rows = np.arange(a.shape[0])
    return index(a, (rows, np.asarray(idx, dtype=np.int64)))


# ---------------------------------------------------------------------------
# fused layers


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, ``x`` is ``(N, C, H, W)``, ``w`` is ``(O, C, kh, kw)``."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    n, c, _, _ = x.shape
    o, _, kh, kw = w.shape
    p, s = padding, stride
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wm = w.data.reshape(o, -1)
    out = (cols @ wm.T + b.data).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def bw(g):
        gf = g.transpose(0, 2, 3, 1).reshape(-1, o)
        dw = (gf.T @ cols).reshape(w.shape)
        db = gf.sum(axis=0)
        if not x.requires_grad:
            return None, dw, db
        dcols = (gf @ wm).reshape(n, ho, wo, c, kh, kw)
        dxp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[..., i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, p : xp.shape[2] - p, p : xp.shape[3] - p] if p else dxp
        return dx, dw, db

    return _make(np.ascontiguousarray(out), (x, w, b), bw, "conv2d")


def gru_sequence(
    x: Tensor,
    h0: Tensor,
    masks: np.ndarray,
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
) -> Tensor:
    """Run a GRU over ``x`` of shape ``(T, B, I)`` from ``h0`` of shape ``(B, H)``.

    ``masks[t]`` (shape ``(T, B)``) multiplies the carried state before step
    ``t``; zero resets the state at an episode boundary.  Gates follow::

        r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
        z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
        n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h

    Returns all hidden states, shape ``(T, B, H)``.
    """
    if x.ndim != 3:
        raise ValueError(f"gru input must be (T, B, I), got {x.shape}")
    t_len, bsz, n_in = x.shape
    hid = w_hh.shape[0]
    if w_ih.shape != (n_in, 3 * hid) or h0.shape != (bsz, hid):
        raise ValueError(f"gru shape mismatch: x {x.shape}, h0 {h0.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape}")
    masks = np.asarray(masks, dtype=x.dtype).reshape(t_len, bsz, 1)
    wi, wh = w_ih.data, w_hh.data
    gi = (x.data.reshape(-1, n_in) @ wi + b_ih.data).reshape(t_len, bsz, 3 * hid)
    hs = np.empty((t_len, bsz, hid), dtype=x.dtype)
    hm_all = np.empty_like(hs)
    r_all = np.empty_like(hs)
    z_all = np.empty_like(hs)
    n_all = np.empty_like(hs)
    ghn_all = np.empty_like(hs)
    h = h0.data
    for t in range(t_len):
        hm = h * masks[t]
        gh = hm @ wh + b_hh.data
        r = _sigmoid(gi[t, :, :hid] + gh[:, :hid])
        z = _sigmoid(gi[t, :, hid : 2 * hid] + gh[:, hid : 2 * hid])
        ghn = gh[:, 2 * hid :]
        n = np.tanh(gi[t, :, 2 * hid :] + r * ghn)
        h = (1 - z) * n + z * hm
        hs[t], hm_all[t], r_all[t], z_all[t], n_all[t], ghn_all[t] = h, hm, r, z, n, ghn

    def bw(g):
        dgi = np.empty_like(gi)
        dgh = np.empty_like(gi)
        dh = np.zeros((bsz, hid), dtype=g.dtype)
        for t in range(t_len - 1, -1, -1):
            dh = dh + g[t]
            r, z, n, hm = r_all[t], z_all[t], n_all[t], hm_all[t]
            dn = dh * (1 - z) * (1 - n * n)
            dz = dh * (hm - n) * z * (1 - z)
            dr = dn * ghn_all[t] * r * (1 - r)
            dgi[t, :, :hid] = dgh[t, :, :hid] = dr
            dgi[t, :, hid : 2 * hid] = dgh[t, :, hid : 2 * hid] = dz
            dgi[t, :, 2 * hid :] = dn
            dgh[t, :, 2 * hid :] = dn * r
            dh = (dh * z + dgh[t] @ wh.T) * masks[t]
        flat_h = dgh.reshape(-1, 3 * hid)
        # weight gradients as one product over all steps instead of T outer products
        dwh = hm_all.reshape(-1, hid).T @ flat_h
        dbh = flat_h.sum(axis=0)
        flat = dgi.reshape(-1, 3 * hid)
        dx = (flat @ wi.T).reshape(x.shape)
        dwi = x.data.reshape(-1, n_in).T @ flat
        dbi = flat.sum(axis=0)
        return dx, dh, dwi, dwh, dbi, dbh

    return _make(hs, (x, h0, w_ih, w_hh, b_ih, b_hh), bw, "gru_sequence")
