"""How far is a controller from optimal?

Every evaluation compares episode lengths with the BFS shortest path from the
same start state.  Here the shortest-path controller and a uniformly random
controller set the two ends of the scale.

Run:  python demos/02_oracle_and_baselines.py [layout]
"""

import sys

import numpy as np

from hrlnav import gridworld as gw
from hrlnav.harness import OracleController, RandomController, evaluate_controller

name = sys.argv[1] if len(sys.argv) > 1 else "toy11"
layout = gw.builtin_layout(name)

steps = [gw.optimal_steps(layout, gw.AgentPose(x, y, h)) for x, y in layout.left_room_cells for h in gw.Heading]
print(f"{name}: {len(steps)} start poses, optimal steps mean {np.mean(steps):.2f} (min {min(steps)}, max {max(steps)})")

for label, ctrl, det in [("shortest path", OracleController(layout), True), ("uniform random", RandomController(), False)]:
    rep = evaluate_controller(ctrl, layout, 100, seed=0, deterministic=det)
    print(
        f"{label:>15}: success {rep.success_rate:.2f}  length {rep.mean_length:6.1f}  "
        f"(optimal {rep.mean_optimal_length:.1f}, ratio {rep.mean_length_ratio:.2f})  energy {rep.mean_energy:6.1f}"
    )
