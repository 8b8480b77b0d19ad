"""PPO with GAE and recurrent rollout storage.

The same learner trains the flat baseline, the low-level policy and the
high-level policy.  Rollouts are stored as ``(time, env)`` arrays; buffers
whose entries are sparse in wall-clock time (the high level) fill each env
column independently and mark unused slots with a validity mask.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from . import nn
from .nn import Tensor
from .nn.autograd import clip as tclip
from .nn.autograd import exp, maximum, minimum

__all__ = [
    "PpoConfig",
    "RolloutBuffer",
    "Minibatch",
    "compute_gae",
    "lr_schedule",
    "joint_log_prob",
    "joint_action_loss",
    "recurrent_minibatches",
    "ppo_update",
    "PpoLearner",
]


@dataclasses.dataclass
class PpoConfig:
    learning_rate: float = 1e-4
    clip: float = 0.2
    epochs: int = 4
    minibatches: int = 8
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    rollout_steps: int = 256
    gamma: float = 0.99
    gae_tau: float = 0.95
    linear_lr_decay: bool = True
    total_updates: int = 1000
    segment_length: int = 32
    clip_value_loss: bool = True
    adam_eps: float = 1e-5

    def validate(self) -> PpoConfig:
        positive = ("learning_rate", "epochs", "minibatches", "max_grad_norm", "rollout_steps", "total_updates", "segment_length")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not 0 <= self.gamma <= 1 or not 0 <= self.gae_tau <= 1:
            raise ValueError("gamma and gae_tau must lie in [0, 1]")
        return self


def lr_schedule(update_index: int, lr0: float, total_updates: int, decay: bool = True) -> float:
    """Linear decay from ``lr0`` at index 0 to zero at ``total_updates``."""
    if not decay:
        return lr0
    if not 0 <= update_index <= total_updates:
        raise ValueError(f"update_index {update_index} outside [0, {total_updates}]")
    return lr0 * (1.0 - update_index / total_updates)


def compute_gae(rewards, values, dones, bootstrap, gamma: float, tau: float, valid=None):
    """Generalised advantage estimates over ``(T, N)`` arrays.

    ``dones[t]`` marks that the episode ended with transition ``t``, so no
    value is bootstrapped across it.  ``bootstrap`` is ``V`` of the state after
    the last valid entry of each column.  Invalid entries (a suffix of each
    column) get zero advantage.  Returns ``(advantages, returns)``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("cannot compute advantages of an empty rollout")
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards, values, dones = rewards[:, None], values[:, None], dones[:, None]
    valid = np.ones_like(rewards, dtype=bool) if valid is None else np.asarray(valid, dtype=bool).reshape(rewards.shape)
    next_value = np.broadcast_to(np.asarray(bootstrap, dtype=np.float64), rewards.shape[1:]).copy()
    last = np.zeros(rewards.shape[1:])
    adv = np.zeros_like(rewards)
    for t in range(rewards.shape[0] - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        a = delta + gamma * tau * nonterminal * last
        v = valid[t]
        adv[t] = np.where(v, a, 0.0)
        last = np.where(v, a, last)
        next_value = np.where(v, values[t], next_value)
    ret = adv + values * valid
    if squeeze:
        return adv[:, 0], ret[:, 0]
    return adv, ret


class RolloutBuffer:
    """On-policy storage shaped ``(capacity, n_envs, ...)``.

    ``actions`` holds one array per action head.  ``h_in[t]`` is the
    recurrent state fed to the policy at entry ``t`` and ``masks[t]`` is 0 when
    entry ``t`` starts a new episode.
    """

    def __init__(self, capacity: int, n_envs: int, map_shape, vec_dim: int, head_shapes: Sequence[tuple], hidden: int):
        self.capacity = capacity
        self.n_envs = n_envs
        self.map_obs = np.zeros((capacity, n_envs) + tuple(map_shape), dtype=np.float32)
        self.vec_obs = np.zeros((capacity, n_envs, vec_dim), dtype=np.float32)
        self.actions = [np.zeros((capacity, n_envs) + tuple(shape), dtype=np.float64 if shape else np.int64) for shape in head_shapes]
        self.log_probs = np.zeros((capacity, n_envs))
        self.values = np.zeros((capacity, n_envs))
        self.rewards = np.zeros((capacity, n_envs))
        self.dones = np.zeros((capacity, n_envs))
        self.masks = np.ones((capacity, n_envs))
        self.h_in = np.zeros((capacity, n_envs, hidden), dtype=np.float32)
        self.valid = np.zeros((capacity, n_envs), dtype=bool)
        self.count = np.zeros(n_envs, dtype=np.int64)
        self.advantages: np.ndarray | None = None
        self.returns: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.count.sum())

    def add(self, env_ids, map_obs, vec_obs, actions, log_probs, values, rewards, dones, h_in, masks) -> None:
        """Append one entry for each env in ``env_ids`` (per-env cursor)."""
        env_ids = np.atleast_1d(np.asarray(env_ids, dtype=np.int64))
        pos = self.count[env_ids]
        if np.any(pos >= self.capacity):
            raise OverflowError("rollout buffer is full")
        self.map_obs[pos, env_ids] = map_obs
        self.vec_obs[pos, env_ids] = vec_obs
        for store, a in zip(self.actions, actions):
            store[pos, env_ids] = a
        self.log_probs[pos, env_ids] = log_probs
        self.values[pos, env_ids] = values
        self.rewards[pos, env_ids] = rewards
        self.dones[pos, env_ids] = dones
        self.h_in[pos, env_ids] = h_in
        self.masks[pos, env_ids] = masks
        self.valid[pos, env_ids] = True
        self.count[env_ids] += 1

    def compute_advantages(self, bootstrap, gamma: float, tau: float) -> None:
        self.advantages, self.returns = compute_gae(self.rewards, self.values, self.dones, bootstrap, gamma, tau, self.valid)

    def clear(self) -> None:
        self.valid[:] = False
        self.count[:] = 0
        self.masks[:] = 1.0
        self.advantages = self.returns = None


@dataclasses.dataclass
class Minibatch:
    map_obs: np.ndarray  # (L, B, C, H, W)
    vec_obs: np.ndarray  # (L, B, V)
    h0: np.ndarray  # (B, hidden)
    masks: np.ndarray  # (L, B)
    actions: list[np.ndarray]  # each (L * B, ...)
    old_log_probs: np.ndarray  # (L * B,)
    old_values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    valid: np.ndarray  # (L * B,) bool


def recurrent_minibatches(buf: RolloutBuffer, n_minibatches: int, segment_length: int, rng: np.random.Generator, advantages=None):
    """Yield minibatches of contiguous segments replayed from stored states.

    Each env column is cut into segments of ``segment_length`` entries; the
    segments are shuffled and dealt into ``n_minibatches`` groups.  Shorter
    segments are padded and masked out via ``valid``.
    """
    segments = [
        (e, s, min(segment_length, int(buf.count[e]) - s))
        for e in range(buf.n_envs)
        for s in range(0, int(buf.count[e]), segment_length)
    ]
    if not segments:
        return
    adv = buf.advantages if advantages is None else advantages
    order = rng.permutation(len(segments))
    for group in np.array_split(order, min(n_minibatches, len(segments))):
        segs = [segments[i] for i in group]
        length = max(n for _, _, n in segs)
        steps = np.arange(length)[:, None]
        env = np.array([e for e, _, _ in segs])[None, :].repeat(length, 0)
        start = np.array([s for _, s, _ in segs])[None, :]
        size = np.array([n for _, _, n in segs])[None, :]
        valid = steps < size
        t_idx = np.minimum(start + steps, buf.capacity - 1)
        masks = buf.masks[t_idx, env].copy()
        masks[0] = 1.0
        yield Minibatch(
            map_obs=buf.map_obs[t_idx, env],
            vec_obs=buf.vec_obs[t_idx, env],
            h0=buf.h_in[start[0], env[0]],
            masks=masks,
            actions=[a[t_idx, env].reshape((-1,) + a.shape[2:]) for a in buf.actions],
            old_log_probs=buf.log_probs[t_idx, env].reshape(-1),
            old_values=buf.values[t_idx, env].reshape(-1),
            advantages=adv[t_idx, env].reshape(-1),
            returns=buf.returns[t_idx, env].reshape(-1),
            valid=(valid & buf.valid[t_idx, env]).reshape(-1),
        )


def joint_log_prob(head_log_probs: Sequence[Tensor]) -> Tensor:
    """Heads are sampled independently, so the joint log-prob is their sum."""
    if not head_log_probs:
        raise ValueError("need at least one head")
    sizes = {lp.shape for lp in head_log_probs}
    if len(sizes) != 1:
        raise ValueError(f"head batch sizes differ: {sorted(sizes)}")
    out = head_log_probs[0]
    for lp in head_log_probs[1:]:
        out = out + lp
    return out


def _masked_mean(x: Tensor, weights: np.ndarray, n: float) -> Tensor:
    return (x * Tensor(weights.astype(x.dtype))).sum() * (1.0 / n)


def joint_action_loss(head_log_probs: Sequence[Tensor], old_log_probs, advantages, clip: float = 0.2, valid=None):
    """Clipped surrogate over the joint log-prob of several action heads.

    Returns ``(loss, ratio)`` where ``loss = -mean(min(r A, clip(r) A))``.
    """
    logp = joint_log_prob(head_log_probs)
    old = np.asarray(old_log_probs)
    adv = np.asarray(advantages)
    if old.shape != logp.shape or adv.shape != logp.shape:
        raise ValueError(f"batch size mismatch: log-probs {logp.shape}, old {old.shape}, advantages {adv.shape}")
    w = np.ones(logp.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    n = max(float(w.sum()), 1.0)
    ratio = exp(logp - Tensor(old.astype(logp.dtype)))
    a = Tensor(adv.astype(logp.dtype))
    surr = minimum(ratio * a, tclip(ratio, 1 - clip, 1 + clip) * a)
    return -_masked_mean(surr, w, n), ratio


def ppo_update(policy, optimizer: nn.Adam, buf: RolloutBuffer, cfg: PpoConfig, rng: np.random.Generator) -> dict:
    """Run ``epochs`` passes of clipped-surrogate PPO over ``buf``.

    Advantages must already be computed.  They are normalised over the valid
    entries of the whole buffer.  Raises ``FloatingPointError`` on a
    non-finite loss.
    """
    if buf.advantages is None:
        raise ValueError("compute advantages before updating")
    mask = buf.valid
    n_valid = int(mask.sum())
    if n_valid == 0:
        return {}
    adv = buf.advantages.copy()
    if n_valid > 1:
        mu = adv[mask].mean()
        sd = adv[mask].std()
        adv = (adv - mu) / (sd + 1e-8)
    params = policy.parameters()
    stats = {k: [] for k in ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl", "grad_norm")}
    for _ in range(cfg.epochs):
        for mb in recurrent_minibatches(buf, cfg.minibatches, cfg.segment_length, rng, advantages=adv):
            w = mb.valid
            n = max(float(w.sum()), 1.0)
            if w.sum() == 0:
                continue
            head_lps, head_ents, values = policy.evaluate(mb.map_obs, mb.vec_obs, mb.h0, mb.masks, mb.actions)
            pl, ratio = joint_action_loss(head_lps, mb.old_log_probs, mb.advantages, cfg.clip, w)
            ret = Tensor(mb.returns.astype(values.dtype))
            if cfg.clip_value_loss:
                old_v = Tensor(mb.old_values.astype(values.dtype))
                v_clip = old_v + tclip(values - old_v, -cfg.clip, cfg.clip)
                err = maximum((values - ret) ** 2, (v_clip - ret) ** 2)
            else:
                err = (values - ret) ** 2
            vl = _masked_mean(err, w, n) * 0.5
            ent = _masked_mean(joint_log_prob(head_ents), w, n)
            loss = pl + vl * cfg.value_coef - ent * cfg.entropy_coef
            if not math.isfinite(loss.item()):
                raise FloatingPointError(
                    f"non-finite PPO loss (policy={pl.item()}, value={vl.item()}, entropy={ent.item()})"
                )
            grads = nn.backward(loss, params)
            for p in params:
                p.grad = None
            grads, gnorm = nn.clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(grads)
            r = ratio.data[w]
            stats["policy_loss"].append(pl.item())
            stats["value_loss"].append(vl.item())
            stats["entropy"].append(ent.item())
            stats["clip_fraction"].append(float(np.mean(np.abs(r - 1) > cfg.clip)))
            stats["approx_kl"].append(float(np.mean(-np.log(r))))
            stats["grad_norm"].append(gnorm)
    return {k: float(np.mean(v)) if v else float("nan") for k, v in stats.items()}


class PpoLearner:
    """A policy, its Adam state and a PPO config."""

    def __init__(self, policy, cfg: PpoConfig, seed=0):
        self.policy = policy
        self.cfg = cfg.validate()
        self.optimizer = nn.Adam(policy.parameters(), lr=cfg.learning_rate, eps=cfg.adam_eps)
        self.rng = np.random.default_rng(seed)

    def update(self, buf: RolloutBuffer, update_index: int) -> dict:
        idx = min(update_index, self.cfg.total_updates)
        self.optimizer.lr = lr_schedule(idx, self.cfg.learning_rate, self.cfg.total_updates, self.cfg.linear_lr_decay)
        stats = ppo_update(self.policy, self.optimizer, buf, self.cfg, self.rng)
        stats["lr"] = self.optimizer.lr
        return stats

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/param/{k}": v for k, v in self.policy.state_dict().items()}
        st = self.optimizer.state
        names = list(self.policy.named_parameters())
        for name, m, v in zip(names, st.m, st.v):
            out[f"{prefix}/adam_m/{name}"] = m
            out[f"{prefix}/adam_v/{name}"] = v
        out[f"{prefix}/adam_t"] = np.array(st.t, dtype=np.int64)
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str) -> None:
        tag = f"{prefix}/param/"
        self.policy.load_state_dict({k[len(tag):]: v for k, v in arrays.items() if k.startswith(tag)})
        names = list(self.policy.named_parameters())
        st = self.optimizer.state
        if f"{prefix}/adam_t" in arrays:
            st.m = [arrays[f"{prefix}/adam_m/{n}"].copy() for n in names]
            st.v = [arrays[f"{prefix}/adam_v/{n}"].copy() for n in names]
            st.t = int(arrays[f"{prefix}/adam_t"])
        self.optimizer.params = self.policy.parameters()
