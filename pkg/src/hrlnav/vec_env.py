"""Several independent grid-world instances stepped in lock-step with auto-reset."""

from __future__ import annotations

import dataclasses

import numpy as np

from . import gridworld as gw
from .normalize import ObsBounds, normalize_io
from .seeding import spawn


@dataclasses.dataclass
class StepBatch:
    rewards: np.ndarray
    dones: np.ndarray
    energy: np.ndarray
    terminal_mutable: np.ndarray  # mutable obs right after the step, before any reset
    episodes: list[dict]  # one record per episode finished on this step


class VecToyEnv:
    def __init__(self, layout: gw.GridLayout, n_envs: int, seed=0, random_goal: bool = False):
        self.layout = layout.validate()
        self.n = n_envs
        self.bounds = ObsBounds.from_layout(layout)
        self.random_goal = random_goal
        self.rngs = [np.random.default_rng(s) for s in spawn(seed, n_envs)]
        self.states: list[gw.EnvState] = []
        self._obs: list[gw.Observation] = []
        self._ret = np.zeros(n_envs)
        self._energy = np.zeros(n_envs, dtype=np.int64)
        self._start: list[gw.AgentPose] = []
        for i in range(n_envs):
            s, o = gw.reset(layout, self.rngs[i], random_goal=random_goal)
            self.states.append(s)
            self._obs.append(o)
            self._start.append(s.pose)

    @property
    def map_shape(self) -> tuple[int, int, int]:
        return (4, self.layout.k, self.layout.k)

    def encoded(self) -> tuple[np.ndarray, np.ndarray]:
        maps, vecs = zip(*(normalize_io(o, self.bounds) for o in self._obs))
        return np.stack(maps), np.stack(vecs)

    def mutable(self) -> np.ndarray:
        return np.stack([gw.mutable_obs(s) for s in self.states])

    def positions(self) -> list[tuple[int, int]]:
        return [s.pose.cell for s in self.states]

    def step(self, actions) -> StepBatch:
        rewards = np.zeros(self.n)
        dones = np.zeros(self.n, dtype=bool)
        energy = np.zeros(self.n, dtype=np.int64)
        terminal = np.zeros((self.n, 4), dtype=np.int64)
        episodes = []
        for i, a in enumerate(actions):
            s, o, r, d = gw.step(self.states[i], a)
            rewards[i], dones[i], energy[i] = r.total, d, r.r_energy
            terminal[i] = gw.mutable_obs(s)
            self._ret[i] += r.total
            self._energy[i] += r.r_energy
            if d:
                episodes.append(
                    {
                        "env": i,
                        "return": float(self._ret[i]),
                        "length": s.steps_elapsed,
                        "success": bool(r.r_success),
                        "energy": int(self._energy[i]),
                        "start": tuple(int(v) for v in self._start[i]),
                    }
                )
                s, o = gw.reset(self.layout, self.rngs[i], random_goal=self.random_goal)
                self._ret[i] = 0.0
                self._energy[i] = 0
                self._start[i] = s.pose
            self.states[i], self._obs[i] = s, o
        return StepBatch(rewards, dones, energy, terminal, episodes)
