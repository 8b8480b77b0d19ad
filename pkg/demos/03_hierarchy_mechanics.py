"""The pieces between the two levels of the hierarchy, without any training.

The high level proposes a relative change of (x, y, yaw, door) plus an
embodiment.  The embodiment masks the low level's actions and picks which
dimensions count towards the subgoal distance; the low level is paid 30x the
drop in that distance each step.

Run:  python demos/03_hierarchy_mechanics.py
"""

import numpy as np

from hrlnav import gridworld as gw
from hrlnav import hrl
from hrlnav.hrl import Embodiment

layout = gw.builtin_layout("toy11")
state = gw.EnvState(layout, gw.AgentPose(*layout.door_front_cell, layout.door_facing), door=1)
x0 = gw.mutable_obs(state)
print("at the door, facing it:", x0.tolist())

for e in Embodiment:
    m = hrl.get_masks(e)
    print(f"{e.name:<9} nav={m.nav!s:<5} manip={m.manip!s:<5} subgoal mask={m.subgoal.astype(int).tolist()}")

# "open the door by two notches using only the arm"
emb = Embodiment.ARM_ONLY
masks = hrl.get_masks(emb)
target = x0 + np.array([0, 0, 0, 2])
print(f"\nsubgoal +2 door with {emb.name}; target {target.tolist()}")
d = hrl.subgoal_distance(x0, target, masks.subgoal)
total = 0.0
for t in range(4):
    # the low level tries to drive forward and slide up; the mask drops the drive
    action = hrl.apply_action_mask(gw.ToyAction(gw.Nav.GO_FORWARD, gw.Manip.SLIDE_UP), masks)
    state, *_ = gw.step(state, action)
    x = gw.mutable_obs(state)
    d_new = hrl.subgoal_distance(x, target, masks.subgoal)
    r = hrl.intrinsic_reward(d, d_new)
    total += r
    rel = hrl.retarget_subgoal(target, x)
    print(f"step {t + 1}: action {action.nav.name}/{action.manip.name} -> {x.tolist()}  D={d_new:.0f}  r_int={r:+.0f}  relative subgoal {rel.tolist()}")
    d = d_new
    if hrl.subgoal_achieved(d):
        print("subgoal reached; the high level is asked again")
        break
print(f"intrinsic return {total:.0f} = 30 x initial distance {hrl.subgoal_distance(x0, target, masks.subgoal):.0f}")

# sampled subgoals are continuous; they are rounded half away from zero
print("\nrounding (0.4, -0.6, 0.2, 0.1) ->", hrl.round_subgoal([0.4, -0.6, 0.2, 0.1], [10, 10, 2, 4]).tolist())
print("yaw 3 -> 0 is", hrl.subgoal_distance([0, 0, 3, 1], [0, 0, 0, 1], [1, 1, 1, 1]), "quarter turn away")
