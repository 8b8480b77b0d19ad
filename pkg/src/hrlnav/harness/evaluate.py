"""Batched policy evaluation against the shortest-path oracle.

All episodes run side by side so the networks see one batch per env step.
Each episode's start state comes from its own seed stream, so a report is a
pure function of (policy, layout, n_episodes, seed, mode).
"""

from __future__ import annotations

import dataclasses
from typing import Protocol, Sequence

import numpy as np

from .. import gridworld as gw
from ..hrl import Embodiment, HrlAgent
from ..normalize import ObsBounds, normalize_io
from ..nn.policy import RecurrentActorCritic
from ..seeding import spawn

__all__ = [
    "EvalReport",
    "Controller",
    "FlatController",
    "HrlController",
    "OracleController",
    "RandomController",
    "evaluate_controller",
]


class Controller(Protocol):
    def begin(self, n: int, rng: np.random.Generator, deterministic: bool) -> None: ...

    def act(self, idx: np.ndarray, states: Sequence[gw.EnvState], obs: Sequence[gw.Observation]) -> list[gw.ToyAction]: ...

    def after_step(self, idx: np.ndarray, states: Sequence[gw.EnvState]) -> None: ...

    def decisions(self, i: int) -> list[dict]: ...


@dataclasses.dataclass
class EvalReport:
    n_episodes: int
    deterministic: bool
    success_rate: float
    mean_length: float
    mean_energy: float
    mean_return: float
    mean_optimal_length: float  # shortest-path steps from the same starts, averaged
    mean_length_ratio: float  # episode length / optimal steps from that start, averaged
    success_length_ratio: float | None  # same, over successful episodes only (None if none)
    embodiment_fractions: dict[str, float] | None
    episodes: list[dict]

    def summary(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("episodes")
        return d


def _encode(states_obs, bounds: ObsBounds, idx):
    maps, vecs = zip(*(normalize_io(states_obs[i], bounds) for i in idx))
    return np.stack(maps), np.stack(vecs)


class FlatController:
    """Greedy or sampled actions from a flat recurrent policy."""

    def __init__(self, policy: RecurrentActorCritic, bounds: ObsBounds):
        self.policy = policy
        self.bounds = bounds

    def begin(self, n, rng, deterministic):
        self.h = self.policy.initial_state(n)
        self.rng = rng
        self.det = deterministic

    def act(self, idx, states, obs):
        maps, vecs = _encode(obs, self.bounds, idx)
        actions, _, _, new_h = self.policy.act(maps, vecs, self.h[idx], self.rng, self.det)
        self.h[idx] = new_h
        return [gw.ToyAction(gw.Nav(int(a)), gw.Manip(int(b))) for a, b in zip(*actions)]

    def after_step(self, idx, states):
        pass

    def decisions(self, i):
        return []


class HrlController:
    """Both levels of a trained hierarchy; records every HL decision."""

    def __init__(self, agent: HrlAgent):
        self.agent = agent
        self.bounds = agent.bounds

    def begin(self, n, rng, deterministic):
        self.agent.begin(n)
        self.rng = rng
        self.det = deterministic
        self._decisions: list[list[dict]] = [[] for _ in range(n)]
        self._n = n

    def act(self, idx, states, obs):
        agent = self.agent
        maps = np.zeros((self._n, 4, states[0].layout.k, states[0].layout.k), dtype=np.float32)
        vecs = np.zeros((self._n, 9), dtype=np.float32)
        mutable = np.zeros((self._n, 4), dtype=np.int64)
        cells = [(0, 0)] * self._n
        m, v = _encode(obs, self.bounds, idx)
        maps[idx], vecs[idx] = m, v
        for i in idx:
            mutable[i] = gw.mutable_obs(states[i])
            cells[i] = states[i].pose.cell
        for i in agent.decide(list(idx), maps, vecs, mutable, cells, self.rng, self.det):
            tr = agent.trackers[i]
            self._decisions[i].append(
                {
                    "step": states[i].steps_elapsed,
                    "cell": list(cells[i]),
                    "heading": int(states[i].pose.heading),
                    "embodiment": int(tr.action.embodiment),
                    "subgoal": tr.action.subgoal.tolist(),
                }
            )
        ll_vecs = agent.ll_inputs(vecs, mutable, idx)
        actions, *_ = agent.ll_act(maps[idx], ll_vecs, self.rng, self.det, idx)
        return agent.env_actions(actions, idx)

    def after_step(self, idx, states):
        for i in idx:
            self.agent.advance(i, gw.mutable_obs(states[i]))

    def decisions(self, i):
        return self._decisions[i]


class OracleController:
    """Follows a shortest path using the BFS distance table."""

    def __init__(self, layout: gw.GridLayout):
        self.layout = layout
        self._tables: dict[tuple[int, int], dict] = {}

    def begin(self, n, rng, deterministic):
        pass

    def act(self, idx, states, obs):
        out = []
        for i in idx:
            goal = states[i].goal
            if goal not in self._tables:
                self._tables[goal] = gw.distance_table(self.layout, goal)
            out.append(gw.optimal_action(self.layout, states[i], self._tables[goal]))
        return out

    def after_step(self, idx, states):
        pass

    def decisions(self, i):
        return []


class RandomController:
    """Uniform over the joint action set."""

    def begin(self, n, rng, deterministic):
        self.rng = rng

    def act(self, idx, states, obs):
        picks = self.rng.integers(len(gw.ACTIONS), size=len(idx))
        return [gw.ACTIONS[int(p)] for p in picks]

    def after_step(self, idx, states):
        pass

    def decisions(self, i):
        return []


def evaluate_controller(
    controller: Controller,
    layout: gw.GridLayout,
    n_episodes: int,
    seed=0,
    deterministic: bool = True,
    random_goal: bool = False,
) -> EvalReport:
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    layout.validate()
    start_ss, sample_ss = spawn(seed, 2)
    states, obs = [], []
    for ss in start_ss.spawn(n_episodes):
        s, o = gw.reset(layout, np.random.default_rng(ss), random_goal=random_goal)
        states.append(s)
        obs.append(o)
    starts = [s.pose for s in states]
    optimal = [gw.optimal_steps(layout, s.pose, s.door, s.goal) for s in states]
    controller.begin(n_episodes, np.random.default_rng(sample_ss), deterministic)
    totals = np.zeros(n_episodes)
    energy = np.zeros(n_episodes, dtype=np.int64)
    success = np.zeros(n_episodes, dtype=bool)
    active = np.ones(n_episodes, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        actions = controller.act(idx, states, obs)
        for i, a in zip(idx, actions):
            states[i], obs[i], r, done = gw.step(states[i], a)
            totals[i] += r.total
            energy[i] += r.r_energy
            success[i] |= bool(r.r_success)
            if done:
                active[i] = False
        controller.after_step(idx, states)

    episodes = []
    emb_counts = np.zeros(len(Embodiment), dtype=np.int64)
    for i in range(n_episodes):
        decisions = controller.decisions(i)
        for d in decisions:
            emb_counts[d["embodiment"]] += 1
        length = states[i].steps_elapsed
        episodes.append(
            {
                "start": [int(v) for v in starts[i]],
                "goal": list(states[i].goal),
                "length": length,
                "optimal": optimal[i],
                "success": bool(success[i]),
                "return": float(totals[i]),
                "energy": int(energy[i]),
                "decisions": decisions,
            }
        )
    ratios = np.array([e["length"] / e["optimal"] for e in episodes])
    fractions = None
    if emb_counts.sum():
        fractions = {e.name: float(emb_counts[e] / emb_counts.sum()) for e in Embodiment}
    return EvalReport(
        n_episodes=n_episodes,
        deterministic=deterministic,
        success_rate=float(success.mean()),
        mean_length=float(np.mean([e["length"] for e in episodes])),
        mean_energy=float(energy.mean()),
        mean_return=float(totals.mean()),
        mean_optimal_length=float(np.mean(optimal)),
        mean_length_ratio=float(ratios.mean()),
        success_length_ratio=float(ratios[success].mean()) if success.any() else None,
        embodiment_fractions=fractions,
        episodes=episodes,
    )
