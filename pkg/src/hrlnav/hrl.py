"""Two-level controller for interactive navigation.

The high level (HL) picks a relative subgoal over the mutable observation
``(x, y, yaw, door)`` together with an embodiment selector (base only, arm only
or both).  The embodiment fixes an action mask for the low level (LL) and a
subgoal mask for the distance that defines the LL's intrinsic reward.  A
subgoal lasts at most ``T`` environment steps or until it is reached; the HL is
trained on the environment reward summed over that span, the LL on the scaled
decrease of the masked subgoal distance.
"""

from __future__ import annotations

import dataclasses
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from . import gridworld as gw
from .nn.policy import HeadSpec, NetConfig, RecurrentActorCritic
from .normalize import ObsBounds, denormalize_subgoal, normalize_io, normalize_subgoal
from .ppo import PpoConfig, PpoLearner, RolloutBuffer
from .seeding import seed_sequence
from .vec_env import VecToyEnv

__all__ = [
    "Embodiment",
    "Masks",
    "HighLevelAction",
    "HrlConfig",
    "SubgoalTracker",
    "get_masks",
    "apply_action_mask",
    "yaw_residue",
    "subgoal_distance",
    "intrinsic_reward",
    "retarget_subgoal",
    "subgoal_achieved",
    "round_subgoal",
    "hl_decide",
    "HrlAgent",
    "HrlTrainer",
    "run_training",
    "LL_VEC_DIM",
    "HL_VEC_DIM",
]


class Embodiment(IntEnum):
    BASE_ONLY = 0
    ARM_ONLY = 1
    BASE_ARM = 2


class Masks(NamedTuple):
    nav: bool
    manip: bool
    subgoal: np.ndarray  # (4,) over (x, y, yaw, door)


_MASKS = {
    Embodiment.BASE_ONLY: (True, False, (1, 1, 1, 0)),
    Embodiment.ARM_ONLY: (False, True, (0, 0, 0, 1)),
    Embodiment.BASE_ARM: (True, True, (1, 1, 1, 1)),
}


def get_masks(e: Embodiment) -> Masks:
    nav, manip, sg = _MASKS[Embodiment(e)]
    return Masks(nav, manip, np.array(sg, dtype=np.float64))


def apply_action_mask(action: gw.ToyAction, masks: Masks) -> gw.ToyAction:
    nav = action.nav if masks.nav else gw.Nav.NOOP
    manip = action.manip if masks.manip else gw.Manip.NOOP
    return gw.ToyAction(gw.Nav(nav), gw.Manip(manip))


def yaw_residue(d):
    """Shortest signed difference of yaw indices, in ``[-2, 1]``."""
    return (np.asarray(d) + 2) % 4 - 2


def _difference(x, target) -> np.ndarray:
    diff = np.asarray(x, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    diff[..., 2] = yaw_residue(diff[..., 2])
    return diff


def subgoal_distance(x, target, subgoal_mask) -> float:
    """Masked Euclidean distance with the yaw axis measured cyclically."""
    diff = _difference(x, target)
    if diff.shape[-1] != 4:
        raise ValueError(f"expected 4-dimensional mutable observations, got {diff.shape}")
    return np.sqrt(np.sum(np.asarray(subgoal_mask) * diff * diff, axis=-1))


def intrinsic_reward(d_before, d_after, scale: float = 30.0):
    return scale * (d_before - d_after)


def retarget_subgoal(absolute_target, x_t) -> np.ndarray:
    """The subgoal relative to the current mutable observation."""
    return _difference(absolute_target, x_t)


def subgoal_achieved(distance: float, space: str = "discrete", threshold: float = 0.05) -> bool:
    if space == "discrete":
        return bool(distance == 0)
    if space == "continuous":
        return bool(distance < threshold)
    raise ValueError(f"unknown state space kind {space!r}")


def round_subgoal(raw, bound) -> np.ndarray:
    """Round half away from zero and clamp to ``[-bound, bound]``."""
    raw = np.asarray(raw, dtype=np.float64)
    r = np.sign(raw) * np.floor(np.abs(raw) + 0.5)
    return np.clip(r, -np.asarray(bound), np.asarray(bound)).astype(np.int64)


@dataclasses.dataclass
class HrlConfig:
    time_scale: int = 4
    intrinsic_reward_scale: float = 30.0
    hl_freeze_updates: int = 500
    hl_lr: float = 1e-5
    ll_lr: float = 1e-4
    gamma_hl: float = 0.99
    gamma_ll: float = 0.99
    subgoal_init_std: tuple[float, ...] = (0.2, 0.2, 0.5, 0.5)
    subgoal_min_std: tuple[float, ...] = (0.1, 0.1, 0.25, 0.25)
    embodiment_selection: bool = True
    hl_segment_length: int = 16

    def __post_init__(self):
        self.subgoal_init_std = tuple(self.subgoal_init_std)
        self.subgoal_min_std = tuple(self.subgoal_min_std)
        if self.time_scale < 1:
            raise ValueError("time_scale must be >= 1")


class HighLevelAction(NamedTuple):
    subgoal: np.ndarray  # (4,) int relative change
    embodiment: Embodiment
    sample: np.ndarray  # (4,) pre-rounding normalised Gaussian sample
    log_prob: float  # joint log-prob of (sample, embodiment)
    value: float


# LL vector: 9 observation fields, relative subgoal (4), subgoal mask (4), embodiment one-hot (3)
HL_VEC_DIM = 9
LL_VEC_DIM = HL_VEC_DIM + 4 + 4 + 3


def make_hl_policy(map_shape, hcfg: HrlConfig, net: NetConfig, seed, dtype=None) -> RecurrentActorCritic:
    heads = [HeadSpec("gaussian", 4, hcfg.subgoal_init_std, hcfg.subgoal_min_std)]
    if hcfg.embodiment_selection:
        heads.append(HeadSpec("categorical", len(Embodiment)))
    return RecurrentActorCritic(map_shape, HL_VEC_DIM, heads, net, seed=seed, dtype=dtype)


def make_ll_policy(map_shape, net: NetConfig, seed, dtype=None) -> RecurrentActorCritic:
    heads = [HeadSpec("categorical", len(gw.Nav)), HeadSpec("categorical", len(gw.Manip))]
    return RecurrentActorCritic(map_shape, LL_VEC_DIM, heads, net, seed=seed, dtype=dtype)


def hl_decide(policy: RecurrentActorCritic, map_obs, vec_obs, h, rng, bounds: ObsBounds, deterministic: bool = False):
    """Query the HL for a batch of envs.

    The Gaussian head works in normalised units; its sample is mapped to raw
    units, rounded and clamped.  The recorded log-prob is taken at the
    pre-rounding sample and summed with the embodiment log-prob.  Without an
    embodiment head every decision uses both base and arm.
    """
    actions, logps, values, new_h = policy.act(map_obs, vec_obs, h, rng, deterministic)
    samples = actions[0]
    if len(actions) > 1:
        embodiments = actions[1]
        joint = logps[0] + logps[1]
    else:
        embodiments = np.full(len(samples), int(Embodiment.BASE_ARM))
        joint = logps[0]
    out = []
    for i in range(len(samples)):
        sub = round_subgoal(denormalize_subgoal(samples[i], bounds), bounds.subgoal_bound)
        out.append(HighLevelAction(sub, Embodiment(int(embodiments[i])), samples[i], float(joint[i]), float(values[i])))
    return out, new_h


@dataclasses.dataclass
class SubgoalTracker:
    """Book-keeping for one env's active HL decision."""

    target: np.ndarray  # absolute target over (x, y, yaw, door)
    masks: Masks
    action: HighLevelAction
    hl_map: np.ndarray
    hl_vec: np.ndarray
    hl_h_in: np.ndarray
    hl_mask_in: float
    steps_used: int = 0
    extrinsic: float = 0.0
    decision_cell: tuple[int, int] = (0, 0)


def ll_vector(base_vec: np.ndarray, tracker: SubgoalTracker, mutable: np.ndarray, bounds: ObsBounds) -> np.ndarray:
    rel = retarget_subgoal(tracker.target, mutable)
    onehot = np.zeros(len(Embodiment))
    onehot[tracker.action.embodiment] = 1.0
    return np.concatenate([base_vec, normalize_subgoal(rel, bounds), tracker.masks.subgoal, onehot]).astype(np.float32)


class HrlAgent:
    """HL and LL policies plus per-env recurrent state; used for rollouts and evaluation."""

    def __init__(self, hl_policy: RecurrentActorCritic, ll_policy: RecurrentActorCritic, hcfg: HrlConfig, bounds: ObsBounds):
        self.hl = hl_policy
        self.ll = ll_policy
        self.cfg = hcfg
        self.bounds = bounds

    def begin(self, n_envs: int):
        self.hl_h = self.hl.initial_state(n_envs)
        self.ll_h = self.ll.initial_state(n_envs)
        self.hl_start = np.ones(n_envs, dtype=bool)
        self.ll_start = np.ones(n_envs, dtype=bool)
        self.trackers: list[SubgoalTracker | None] = [None] * n_envs

    def decide(self, idx, maps, vecs, mutable, cells, rng, deterministic=False) -> list[int]:
        """HL decisions for envs in ``idx`` without an active subgoal; returns those envs."""
        need = [i for i in idx if self.trackers[i] is None]
        if not need:
            return need
        h_in = self.hl_h[need] * ~self.hl_start[need, None]
        acts, new_h = hl_decide(self.hl, maps[need], vecs[need], h_in, rng, self.bounds, deterministic)
        self.hl_h[need] = new_h
        for j, i in enumerate(need):
            a = acts[j]
            target = mutable[i].astype(np.float64) + a.subgoal
            self.trackers[i] = SubgoalTracker(
                target=target,
                masks=get_masks(a.embodiment),
                action=a,
                hl_map=maps[i],
                hl_vec=vecs[i],
                hl_h_in=h_in[j],
                hl_mask_in=0.0 if self.hl_start[i] else 1.0,
                decision_cell=tuple(cells[i]),
            )
            self.hl_start[i] = False
        return need

    def ll_inputs(self, vecs, mutable, idx=None) -> np.ndarray:
        """LL vectors for envs ``idx`` (default all); inputs are indexed by env id."""
        idx = range(len(vecs)) if idx is None else idx
        return np.stack([ll_vector(vecs[i], self.trackers[i], mutable[i], self.bounds) for i in idx])

    def ll_act(self, maps, ll_vecs, rng, deterministic=False, idx=None):
        """LL step for envs ``idx``; ``maps`` and ``ll_vecs`` hold one row per entry of ``idx``."""
        idx = np.arange(len(self.ll_h)) if idx is None else np.asarray(idx)
        h_in = self.ll_h[idx] * ~self.ll_start[idx, None]
        actions, logps, values, new_h = self.ll.act(maps, ll_vecs, h_in, rng, deterministic)
        mask_in = (~self.ll_start[idx]).astype(np.float64)
        self.ll_h[idx] = new_h
        self.ll_start[idx] = False
        return actions, logps[0] + logps[1], values, h_in, mask_in

    def env_actions(self, actions, idx=None) -> list[gw.ToyAction]:
        idx = range(len(actions[0])) if idx is None else idx
        out = []
        for i, nav, manip in zip(idx, actions[0], actions[1]):
            raw = gw.ToyAction(gw.Nav(int(nav)), gw.Manip(int(manip)))
            out.append(apply_action_mask(raw, self.trackers[i].masks))
        return out

    def advance(self, i: int, mutable_after) -> tuple[bool, bool]:
        """Count one env step against env ``i``'s subgoal.

        Returns ``(reached, expired)``; the subgoal is dropped when either holds.
        """
        tr = self.trackers[i]
        tr.steps_used += 1
        reached = subgoal_achieved(subgoal_distance(mutable_after, tr.target, tr.masks.subgoal))
        expired = tr.steps_used >= self.cfg.time_scale
        if reached or expired:
            self.trackers[i] = None
        return reached, expired

    def episode_reset(self, i: int) -> None:
        self.hl_start[i] = True
        self.ll_start[i] = True
        self.trackers[i] = None


class HrlTrainer:
    """Rollout collection and updates for both levels.

    Each update cycle runs ``rollout_steps`` env steps in every env.  LL
    transitions are stored every step; an HL transition is stored when its
    subgoal is reached, times out, or the episode ends.  Both buffers are used
    for one PPO update and then cleared.  HL updates are skipped for the first
    ``hl_freeze_updates`` cycles.
    """

    def __init__(
        self,
        layout: gw.GridLayout,
        hcfg: HrlConfig,
        ppo_cfg: PpoConfig,
        net_cfg: NetConfig,
        n_envs: int = 8,
        seed=0,
        random_goal: bool = False,
        trace: bool = False,
    ):
        ss = seed_sequence(seed)
        env_ss, hl_ss, ll_ss, samp_ss, hl_upd_ss, ll_upd_ss = ss.spawn(6)
        self.env = VecToyEnv(layout, n_envs, env_ss, random_goal)
        self.hcfg = hcfg
        self.bounds = self.env.bounds
        map_shape = self.env.map_shape
        hl = make_hl_policy(map_shape, hcfg, net_cfg, hl_ss)
        ll = make_ll_policy(map_shape, net_cfg, ll_ss)
        self.hl_learner = PpoLearner(
            hl, dataclasses.replace(ppo_cfg, learning_rate=hcfg.hl_lr, gamma=hcfg.gamma_hl, segment_length=hcfg.hl_segment_length), hl_upd_ss
        )
        self.ll_learner = PpoLearner(ll, dataclasses.replace(ppo_cfg, learning_rate=hcfg.ll_lr, gamma=hcfg.gamma_ll), ll_upd_ss)
        self.agent = HrlAgent(hl, ll, hcfg, self.bounds)
        self.agent.begin(n_envs)
        self.rng = np.random.default_rng(samp_ss)
        self.n_envs = n_envs
        self.rollout_steps = ppo_cfg.rollout_steps
        hidden = net_cfg.hidden
        self.ll_buf = RolloutBuffer(self.rollout_steps, n_envs, map_shape, LL_VEC_DIM, [(), ()], hidden)
        hl_heads = [(4,), ()] if hcfg.embodiment_selection else [(4,)]
        self.hl_buf = RolloutBuffer(self.rollout_steps + 1, n_envs, map_shape, HL_VEC_DIM, hl_heads, hidden)
        self.update_index = 0
        self.env_steps = 0
        self.trace: list[tuple] | None = [] if trace else None

    @property
    def hl_policy(self) -> RecurrentActorCritic:
        return self.agent.hl

    @property
    def ll_policy(self) -> RecurrentActorCritic:
        return self.agent.ll

    def _push_hl(self, i: int, done: bool) -> None:
        tr = self.agent.trackers[i]
        a = tr.action
        actions = [a.sample[None]]
        if self.hcfg.embodiment_selection:
            actions.append(np.array([int(a.embodiment)]))
        self.hl_buf.add(
            [i], tr.hl_map[None], tr.hl_vec[None], actions, a.log_prob, a.value, tr.extrinsic, float(done), tr.hl_h_in[None], tr.hl_mask_in
        )

    def collect(self) -> dict:
        env, agent, cfg = self.env, self.agent, self.hcfg
        all_envs = list(range(self.n_envs))
        episodes, emb_counts = [], np.zeros(len(Embodiment), dtype=np.int64)
        achieved = timeouts = 0
        intrinsic_sum = 0.0
        for _ in range(self.rollout_steps):
            maps, vecs = env.encoded()
            mutable = env.mutable()
            cells = env.positions()
            for i in agent.decide(all_envs, maps, vecs, mutable, cells, self.rng):
                emb_counts[agent.trackers[i].action.embodiment] += 1
                if self.trace is not None:
                    self.trace.append(("decide", i, self.env_steps, cells[i], int(agent.trackers[i].action.embodiment)))
            ll_vecs = agent.ll_inputs(vecs, mutable)
            actions, logp, values, h_in, mask_in = agent.ll_act(maps, ll_vecs, self.rng)
            res = env.step(agent.env_actions(actions))
            rewards = np.zeros(self.n_envs)
            for i in all_envs:
                tr = agent.trackers[i]
                tr.steps_used += 1
                tr.extrinsic += res.rewards[i]
                d0 = subgoal_distance(mutable[i], tr.target, tr.masks.subgoal)
                d1 = subgoal_distance(res.terminal_mutable[i], tr.target, tr.masks.subgoal)
                rewards[i] = intrinsic_reward(d0, d1, cfg.intrinsic_reward_scale)
                reached = subgoal_achieved(d1)
                if reached or tr.steps_used >= cfg.time_scale or res.dones[i]:
                    achieved += reached
                    timeouts += not reached and not res.dones[i]
                    self._push_hl(i, bool(res.dones[i]))
                    if self.trace is not None:
                        reason = "achieved" if reached else ("timeout" if tr.steps_used >= cfg.time_scale else "episode_end")
                        self.trace.append(("complete", i, self.env_steps, tr.steps_used, reason, bool(res.dones[i])))
                    agent.trackers[i] = None
                if res.dones[i]:
                    agent.episode_reset(i)
            intrinsic_sum += rewards.sum()
            self.ll_buf.add(all_envs, maps, ll_vecs, actions, logp, values, rewards, res.dones.astype(float), h_in, mask_in)
            episodes.extend(res.episodes)
            self.env_steps += self.n_envs
        # pending decisions give the bootstrap values for both levels
        maps, vecs = env.encoded()
        mutable = env.mutable()
        cells = env.positions()
        for i in agent.decide(all_envs, maps, vecs, mutable, cells, self.rng):
            emb_counts[agent.trackers[i].action.embodiment] += 1
            if self.trace is not None:
                self.trace.append(("decide", i, self.env_steps, cells[i], int(agent.trackers[i].action.embodiment)))
        ll_vecs = agent.ll_inputs(vecs, mutable)
        ll_boot = agent.ll.values(maps, ll_vecs, agent.ll_h * ~agent.ll_start[:, None])
        hl_boot = np.array([agent.trackers[i].action.value for i in all_envs])
        self.ll_buf.compute_advantages(ll_boot, cfg.gamma_ll, self.ll_learner.cfg.gae_tau)
        if len(self.hl_buf):
            self.hl_buf.compute_advantages(hl_boot, cfg.gamma_hl, self.hl_learner.cfg.gae_tau)
        n_dec = int(emb_counts.sum())
        return {
            "episodes": episodes,
            "embodiment_counts": emb_counts,
            "hl_decisions": n_dec,
            "subgoal_achieved_rate": achieved / max(len(self.hl_buf), 1),
            "subgoal_timeout_rate": timeouts / max(len(self.hl_buf), 1),
            "mean_intrinsic_reward": intrinsic_sum / (self.rollout_steps * self.n_envs),
            "hl_transitions": len(self.hl_buf),
        }

    def update(self) -> dict:
        stats = {}
        if self.update_index >= self.hcfg.hl_freeze_updates and len(self.hl_buf):
            stats["hl"] = self.hl_learner.update(self.hl_buf, self.update_index)
        else:
            stats["hl"] = {}
        stats["ll"] = self.ll_learner.update(self.ll_buf, self.update_index)
        self.hl_buf.clear()
        self.ll_buf.clear()
        self.update_index += 1
        return stats

    def train_cycle(self) -> dict:
        info = self.collect()
        info["ppo"] = self.update()
        info["env_steps"] = self.env_steps
        info["update"] = self.update_index - 1
        return info

    def checkpoint_arrays(self) -> dict[str, np.ndarray]:
        out = self.hl_learner.state_arrays("hl")
        out.update(self.ll_learner.state_arrays("ll"))
        return out

    def load_checkpoint_arrays(self, arrays) -> None:
        self.hl_learner.load_arrays(arrays, "hl")
        self.ll_learner.load_arrays(arrays, "ll")


def run_training(layout, hcfg: HrlConfig, ppo_cfg: PpoConfig, net_cfg: NetConfig, n_updates: int, n_envs: int = 8, seed=0, callback=None):
    """Train both levels for ``n_updates`` cycles; yields per-cycle info via ``callback``.

    Returns ``(hl_policy, ll_policy, history)``.
    """
    trainer = HrlTrainer(layout, hcfg, ppo_cfg, net_cfg, n_envs=n_envs, seed=seed)
    history = []
    for _ in range(n_updates):
        info = trainer.train_cycle()
        history.append(info)
        if callback is not None and callback(trainer, info) is False:
            break
    return trainer.hl_policy, trainer.ll_policy, history


def run_episode(agent: HrlAgent, layout: gw.GridLayout, seed, deterministic: bool = True, start: gw.EnvState | None = None) -> dict:
    """Play one episode and return its record, including every HL decision."""
    rng = np.random.default_rng(seed)
    if start is None:
        state, obs = gw.reset(layout, rng)
    else:
        state, obs = start, gw.observe(start)
    agent.begin(1)
    start_pose = state.pose
    decisions, total, energy, success = [], 0.0, 0, False
    while not state.done:
        gmap, vec = normalize_io(obs, agent.bounds)
        maps, vecs = gmap[None], vec[None]
        mutable = gw.mutable_obs(state)[None]
        if agent.decide([0], maps, vecs, mutable, [state.pose.cell], rng, deterministic):
            tr = agent.trackers[0]
            decisions.append(
                {
                    "step": state.steps_elapsed,
                    "cell": list(state.pose.cell),
                    "heading": int(state.pose.heading),
                    "embodiment": int(tr.action.embodiment),
                    "subgoal": tr.action.subgoal.tolist(),
                }
            )
        ll_vecs = agent.ll_inputs(vecs, mutable)
        actions, _, _, _, _ = agent.ll_act(maps, ll_vecs, rng, deterministic)
        act = agent.env_actions(actions)[0]
        state, obs, r, done = gw.step(state, act)
        total += r.total
        energy += r.r_energy
        success = success or bool(r.r_success)
        agent.advance(0, gw.mutable_obs(state))
    return {
        "start": [int(v) for v in start_pose],
        "length": state.steps_elapsed,
        "success": success,
        "return": total,
        "energy": energy,
        "decisions": decisions,
    }

