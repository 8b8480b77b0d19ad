"""Affine maps between raw observation/action fields and [-1, 1]."""

from __future__ import annotations

import dataclasses

import numpy as np

from .gridworld import GridLayout, Observation

__all__ = ["ObsBounds", "normalize", "denormalize", "normalize_io", "denormalize_subgoal", "VEC_FIELDS"]

# order of the non-spatial observation vector
VEC_FIELDS = ("x", "y", "yaw", "door", "cos_yaw", "sin_yaw", "goal_x", "goal_y", "next_to_door")


def normalize(value, lo, hi):
    """Map ``[lo, hi]`` onto ``[-1, 1]``."""
    value, lo, hi = (np.asarray(a, dtype=np.float64) for a in (value, lo, hi))
    return 2.0 * (value - lo) / (hi - lo) - 1.0


def denormalize(u, lo, hi):
    u, lo, hi = (np.asarray(a, dtype=np.float64) for a in (u, lo, hi))
    return lo + (u + 1.0) * 0.5 * (hi - lo)


@dataclasses.dataclass(frozen=True)
class ObsBounds:
    k: int
    door_max: int

    @classmethod
    def from_layout(cls, layout: GridLayout) -> ObsBounds:
        return cls(layout.k, layout.door_max)

    @property
    def vec_low(self) -> np.ndarray:
        return np.array([0, 0, 0, 1, -1, -1, 0, 0, 0], dtype=np.float64)

    @property
    def vec_high(self) -> np.ndarray:
        k1 = self.k - 1
        return np.array([k1, k1, 3, self.door_max, 1, 1, k1, k1, 1], dtype=np.float64)

    @property
    def subgoal_bound(self) -> np.ndarray:
        """Largest allowed relative change per mutable dimension."""
        return np.array([self.k - 1, self.k - 1, 2, self.door_max - 1], dtype=np.float64)

    @property
    def mutable_low(self) -> np.ndarray:
        return np.array([0, 0, 0, 1], dtype=np.float64)

    @property
    def mutable_high(self) -> np.ndarray:
        return np.array([self.k - 1, self.k - 1, 3, self.door_max], dtype=np.float64)


def raw_vector(obs: Observation) -> np.ndarray:
    return np.array(
        [
            obs.agent_position[0],
            obs.agent_position[1],
            obs.agent_yaw,
            obs.door_state,
            obs.cos_yaw,
            obs.sin_yaw,
            obs.goal_position[0],
            obs.goal_position[1],
            float(obs.next_to_door),
        ],
        dtype=np.float64,
    )


def normalize_io(obs: Observation, bounds: ObsBounds) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(map, vector)`` with every field mapped onto ``[-1, 1]``.

    Map channels are stored in ``[0, 1]`` and mapped with ``2 m - 1``.
    """
    vec = normalize(raw_vector(obs), bounds.vec_low, bounds.vec_high)
    gmap = 2.0 * obs.global_map - 1.0
    return gmap.astype(np.float32), vec.astype(np.float32)


def denormalize_subgoal(u, bounds: ObsBounds) -> np.ndarray:
    """Normalised subgoal action in ``[-1, 1]`` to a relative change in raw units."""
    b = bounds.subgoal_bound
    return denormalize(np.clip(u, -1.0, 1.0), -b, b)


def normalize_subgoal(g, bounds: ObsBounds) -> np.ndarray:
    b = bounds.subgoal_bound
    return normalize(g, -b, b)
