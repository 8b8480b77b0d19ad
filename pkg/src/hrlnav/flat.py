"""Flat PPO baseline acting directly on the joint navigation/manipulation action."""

from __future__ import annotations

import numpy as np

from . import gridworld as gw
from .nn.policy import HeadSpec, NetConfig, RecurrentActorCritic
from .normalize import ObsBounds, normalize_io
from .ppo import PpoConfig, PpoLearner, RolloutBuffer
from .seeding import spawn
from .vec_env import VecToyEnv

VEC_DIM = 9


def make_flat_policy(map_shape, net: NetConfig, seed, dtype=None) -> RecurrentActorCritic:
    heads = [HeadSpec("categorical", len(gw.Nav)), HeadSpec("categorical", len(gw.Manip))]
    return RecurrentActorCritic(map_shape, VEC_DIM, heads, net, seed=seed, dtype=dtype)


def to_actions(nav, manip) -> list[gw.ToyAction]:
    return [gw.ToyAction(gw.Nav(int(n)), gw.Manip(int(m))) for n, m in zip(nav, manip)]


class FlatTrainer:
    def __init__(self, layout: gw.GridLayout, ppo_cfg: PpoConfig, net_cfg: NetConfig, n_envs: int = 8, seed=0, random_goal: bool = False):
        env_ss, pol_ss, samp_ss, upd_ss = spawn(seed, 4)
        self.env = VecToyEnv(layout, n_envs, env_ss, random_goal)
        self.learner = PpoLearner(make_flat_policy(self.env.map_shape, net_cfg, pol_ss), ppo_cfg, upd_ss)
        self.rng = np.random.default_rng(samp_ss)
        self.n_envs = n_envs
        self.cfg = ppo_cfg
        self.buf = RolloutBuffer(ppo_cfg.rollout_steps, n_envs, self.env.map_shape, VEC_DIM, [(), ()], net_cfg.hidden)
        self.h = self.policy.initial_state(n_envs)
        self.start = np.ones(n_envs, dtype=bool)
        self.update_index = 0
        self.env_steps = 0

    @property
    def policy(self) -> RecurrentActorCritic:
        return self.learner.policy

    def collect(self) -> dict:
        episodes = []
        envs = np.arange(self.n_envs)
        for _ in range(self.cfg.rollout_steps):
            maps, vecs = self.env.encoded()
            h_in = self.h * ~self.start[:, None]
            actions, logps, values, self.h = self.policy.act(maps, vecs, h_in, self.rng)
            mask_in = (~self.start).astype(float)
            res = self.env.step(to_actions(*actions))
            self.buf.add(envs, maps, vecs, actions, logps[0] + logps[1], values, res.rewards, res.dones.astype(float), h_in, mask_in)
            self.start = res.dones.copy()
            episodes.extend(res.episodes)
            self.env_steps += self.n_envs
        maps, vecs = self.env.encoded()
        boot = self.policy.values(maps, vecs, self.h * ~self.start[:, None])
        self.buf.compute_advantages(boot, self.cfg.gamma, self.cfg.gae_tau)
        return {"episodes": episodes}

    def train_cycle(self) -> dict:
        info = self.collect()
        info["ppo"] = {"ll": self.learner.update(self.buf, self.update_index)}
        self.buf.clear()
        info["update"] = self.update_index
        info["env_steps"] = self.env_steps
        self.update_index += 1
        return info

    def checkpoint_arrays(self) -> dict[str, np.ndarray]:
        return self.learner.state_arrays("flat")

    def load_checkpoint_arrays(self, arrays) -> None:
        self.learner.load_arrays(arrays, "flat")


def run_episode(policy: RecurrentActorCritic, layout: gw.GridLayout, seed, deterministic: bool = True, start: gw.EnvState | None = None) -> dict:
    rng = np.random.default_rng(seed)
    bounds = ObsBounds.from_layout(layout)
    state, obs = gw.reset(layout, rng) if start is None else (start, gw.observe(start))
    start_pose = state.pose
    h = policy.initial_state(1)
    total, energy, success = 0.0, 0, False
    while not state.done:
        gmap, vec = normalize_io(obs, bounds)
        actions, _, _, h = policy.act(gmap[None], vec[None], h, rng, deterministic)
        state, obs, r, _ = gw.step(state, to_actions(*actions)[0])
        total += r.total
        energy += r.r_energy
        success = success or bool(r.r_success)
    return {
        "start": [int(v) for v in start_pose],
        "length": state.steps_elapsed,
        "success": success,
        "return": total,
        "energy": energy,
        "decisions": [],
    }
