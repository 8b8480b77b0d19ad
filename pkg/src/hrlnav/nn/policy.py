"""Recurrent actor-critic: conv + vector branches feeding a GRU, with value and action heads."""

from __future__ import annotations

import dataclasses

import numpy as np

from .heads import CategoricalHead, GaussianHead
from .layers import GRU, Conv2d, Dense, Module
from .autograd import Tensor, concat, get_default_dtype, no_grad, relu

__all__ = ["NetConfig", "Trunk", "RecurrentActorCritic", "HeadSpec", "forward_trunk"]


@dataclasses.dataclass(frozen=True)
class NetConfig:
    conv_channels: tuple[int, ...] = (32, 64, 64)
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    map_fc: int = 256
    vec_fc: int = 64
    hidden: int = 512

    @classmethod
    def from_dict(cls, d: dict) -> NetConfig:
        d = dict(d)
        if "conv_channels" in d:
            d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)


@dataclasses.dataclass(frozen=True)
class HeadSpec:
    kind: str  # "categorical" or "gaussian"
    size: int
    init_std: tuple[float, ...] | None = None
    min_std: tuple[float, ...] | None = None


class Trunk(Module):
    """Three conv layers + dense on the map, dense on the vector, concatenated into a GRU."""

    def __init__(self, map_shape: tuple[int, int, int], vec_dim: int, cfg: NetConfig, rng: np.random.Generator, dtype=None):
        c, h, w = map_shape
        self.map_shape = tuple(map_shape)
        self.vec_dim = vec_dim
        self.convs = []
        for c_out in cfg.conv_channels:
            conv = Conv2d(c, c_out, rng, kernel=cfg.kernel, stride=cfg.stride, padding=cfg.padding, dtype=dtype)
            h, w, c = conv.out_size(h), conv.out_size(w), c_out
            self.convs.append(conv)
        self.map_fc = Dense(c * h * w, cfg.map_fc, rng, dtype=dtype)
        self.vec_fc = Dense(vec_dim, cfg.vec_fc, rng, dtype=dtype)
        self.gru = GRU(cfg.map_fc + cfg.vec_fc, cfg.hidden, rng, dtype=dtype)
        self.hidden = cfg.hidden

    def __call__(self, map_obs, vec_obs, h0, masks) -> Tensor:
        """Sequence forward.

        ``map_obs``: ``(T, B, C, H, W)``, ``vec_obs``: ``(T, B, V)``,
        ``h0``: ``(B, hidden)``, ``masks``: ``(T, B)``.  Returns GRU outputs
        flattened to ``(T * B, hidden)``.
        """
        map_obs = np.asarray(map_obs)
        vec_obs = np.asarray(vec_obs)
        if map_obs.ndim != 5 or map_obs.shape[2:] != self.map_shape:
            raise ValueError(f"map_obs must be (T, B, *{self.map_shape}), got {map_obs.shape}")
        t_len, bsz = map_obs.shape[:2]
        if vec_obs.shape != (t_len, bsz, self.vec_dim):
            raise ValueError(f"vec_obs must be ({t_len}, {bsz}, {self.vec_dim}), got {vec_obs.shape}")
        dtype = self.gru.w_hh.dtype
        x = Tensor(map_obs.reshape((t_len * bsz,) + self.map_shape).astype(dtype, copy=False))
        for conv in self.convs:
            x = relu(conv(x))
        x = relu(self.map_fc(x.reshape(t_len * bsz, -1)))
        v = relu(self.vec_fc(Tensor(vec_obs.reshape(t_len * bsz, -1).astype(dtype, copy=False))))
        joint = concat([x, v], axis=1).reshape(t_len, bsz, -1)
        out = self.gru(joint, h0, masks)
        return out.reshape(t_len * bsz, self.hidden)


def forward_trunk(trunk: Trunk, map_obs, vec_obs, gru_state):
    """Single-step forward for one or a batch of observations.

    ``map_obs`` is ``(C, H, W)`` or ``(B, C, H, W)``; returns
    ``(features, new_gru_state)`` with the GRU output as features.
    """
    map_obs = np.asarray(map_obs)
    single = map_obs.ndim == 3
    if single:
        map_obs, vec_obs, gru_state = map_obs[None], np.asarray(vec_obs)[None], np.asarray(gru_state)[None]
    if np.shape(gru_state)[-1] != trunk.hidden:
        raise ValueError(f"gru_state must have {trunk.hidden} features, got {np.shape(gru_state)}")
    bsz = map_obs.shape[0]
    feats = trunk(map_obs[None], np.asarray(vec_obs)[None], gru_state, np.ones((1, bsz)))
    new_state = feats.data.copy()
    if single:
        return feats[0], new_state[0]
    return feats, new_state


class RecurrentActorCritic(Module):
    def __init__(
        self,
        map_shape,
        vec_dim: int,
        heads: list[HeadSpec],
        cfg: NetConfig | None = None,
        seed=0,
        dtype=None,
    ):
        cfg = cfg or NetConfig()
        rng = np.random.default_rng(seed)
        dtype = dtype or get_default_dtype()
        self.cfg = cfg
        self.head_specs = list(heads)
        self.trunk = Trunk(map_shape, vec_dim, cfg, rng, dtype=dtype)
        self.value = Dense(cfg.hidden, 1, rng, gain=1.0, dtype=dtype)
        self.heads = []
        for spec in heads:
            if spec.kind == "categorical":
                self.heads.append(CategoricalHead(cfg.hidden, spec.size, rng, dtype=dtype))
            elif spec.kind == "gaussian":
                self.heads.append(GaussianHead(cfg.hidden, spec.size, rng, spec.init_std, spec.min_std, dtype=dtype))
            else:
                raise ValueError(f"unknown head kind {spec.kind!r}")

    @property
    def hidden(self) -> int:
        return self.cfg.hidden

    @property
    def dtype(self):
        return self.trunk.gru.w_hh.dtype

    def initial_state(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden), dtype=self.dtype)

    def act(self, map_obs, vec_obs, h, rng: np.random.Generator, deterministic: bool = False):
        """One step for a batch: ``map_obs`` ``(B, C, H, W)``, ``vec_obs`` ``(B, V)``, ``h`` ``(B, hidden)``.

        Returns ``(actions, head_log_probs, value, new_h)`` where ``actions``
        and ``head_log_probs`` hold one array per head.
        """
        with no_grad():
            feats = self.trunk(np.asarray(map_obs)[None], np.asarray(vec_obs)[None], h, np.ones((1, len(h))))
            value = self.value(feats).data[:, 0].astype(np.float64)
            actions, logps = [], []
            for head in self.heads:
                out = head(feats).data.astype(np.float64)
                a, lp = head.sample(out, rng, deterministic)
                actions.append(a)
                logps.append(lp)
        return actions, logps, value, feats.data.copy()

    def values(self, map_obs, vec_obs, h) -> np.ndarray:
        with no_grad():
            feats = self.trunk(np.asarray(map_obs)[None], np.asarray(vec_obs)[None], h, np.ones((1, len(h))))
            return self.value(feats).data[:, 0].astype(np.float64)

    def evaluate(self, map_obs, vec_obs, h0, masks, actions):
        """Replay a batch of sequences with gradients.

        ``actions`` is one array per head, each shaped ``(T * B, ...)``.
        Returns ``(head_log_probs, head_entropies, values)`` as tensors of
        length ``T * B``.
        """
        feats = self.trunk(map_obs, vec_obs, h0, masks)
        values = self.value(feats).reshape(-1)
        logps, ents = [], []
        for head, act in zip(self.heads, actions):
            out = head(feats)
            logps.append(head.log_prob(out, act))
            ents.append(head.entropy(out))
        return logps, ents, values
