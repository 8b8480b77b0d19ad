"""Hierarchical reinforcement learning for interactive navigation on a grid world.

Modules: ``gridworld`` (environment and shortest-path oracle), ``nn`` (numpy
autodiff and recurrent actor-critic), ``ppo``, ``hrl`` (two-level controller),
``flat`` (flat PPO baseline) and ``harness`` (runs, evaluation, analysis, CLI).
"""

__version__ = "0.1.0"
