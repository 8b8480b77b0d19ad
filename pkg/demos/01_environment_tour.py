"""A walk through the interactive grid world.

The agent starts somewhere in the left room with the door closed.  It has to
stand in front of the door, facing it, and slide it up until it is fully open
before it can walk through to the goal.  Every actuated subsystem (base or
arm) costs a little energy.

Run:  python demos/01_environment_tour.py
"""

from hrlnav import gridworld as gw
from hrlnav.gridworld import Manip, Nav, ToyAction

layout = gw.builtin_layout("toy11")
state, obs = gw.reset(layout, 3)
print("start:")
print(gw.render_text(state))

# Follow the shortest path from the BFS distance table and narrate it.
table = gw.distance_table(layout)
print(f"\nshortest path from here: {gw.optimal_steps(layout, state.pose)} steps\n")
total = 0.0
while not state.done:
    action = gw.optimal_action(layout, state, table)
    state, obs, reward, done = gw.step(state, action)
    total += reward.total
    print(f"{state.steps_elapsed:3d}  {action.nav.name:<12} {action.manip.name:<11} door={state.door}  reward={reward.total:+.3f}")

print("\nfinal:")
print(gw.render_text(state))
print(f"return {total:.3f}")

# The door only responds from its front cell while facing it, and it blocks
# until fully open.  Pushing a partly open door does nothing but cost energy.
front = gw.EnvState(layout, gw.AgentPose(*layout.door_front_cell, layout.door_facing), door=2)
s2, _, r, _ = gw.step(front, ToyAction(Nav.GO_FORWARD, Manip.NOOP))
print(f"\nwalking into a door at 2/{layout.door_max}: moved={s2.pose != front.pose}, energy={r.r_energy}")

# Manipulation happens before navigation inside one step, so the last slide-up
# and the step through the door can share a step.
almost = gw.EnvState(layout, front.pose, door=layout.door_max - 1)
s3, _, r, _ = gw.step(almost, ToyAction(Nav.GO_FORWARD, Manip.SLIDE_UP))
print(f"slide up + forward at {layout.door_max - 1}/{layout.door_max}: now at {s3.pose.cell}, energy={r.r_energy}")

# Observations: a 4-channel global map plus a few scalars.
print("\nobservation map channels (walls, agent heading, goal, door):", obs.global_map.shape)
print("mutable part (x, y, yaw, door):", gw.mutable_obs(state).tolist())
